#pragma once

#include "spincal/dynamics.hpp"

#include <functional>
#include <vector>

namespace spincal {

/// L_ij(z) = p_i delta_ij + (1 - delta_ij) f_ij Phi(x_i - x_j, z).
CMatrix lax(const PhasePoint &pp, cplx z, const Lattice &lat);

/// Exponential-free matrix similar to lax(pp, z): entries f_ij sigma(z - x_ij) / (sigma(z) sigma(x_ij)),
/// positions reduced modulo the lattice. Same characteristic polynomial, eigenvalues and principal minors.
CMatrix lax_gauged(const PhasePoint &pp, cplx z, const Lattice &lat);

/// D^-1 L(z) D with D = diag(exp((x_i - x0)/z)); x0 cancels in the entries f_ij Phi(x_ij, z) exp(-x_ij/z).
CMatrix gauge_regularized_lax(const PhasePoint &pp, cplx z, cplx x0, const Lattice &lat);

/// Coefficients r_0..r_N of (2k)^{N-j} in det(2k I + L(z)); r_0 = 1.
std::vector<cplx> char_poly(const PhasePoint &pp, cplx z, const Lattice &lat);

/// R(k, z) = sum_j r_j (2k)^{N-j} and dR/dk for given coefficients.
std::pair<cplx, cplx> curve_value(const std::vector<cplx> &coeffs, cplx k);

int genus(int N, int l);

struct SpectralCurve {
    int N = 0;
    int l = 0;
    int g = 0;
    std::vector<cplx> z_grid;
    std::vector<std::vector<cplx>> coeff_samples; // [m][j] = r_j(z_grid[m])
};

/// Deterministic reference points inside the fundamental cell, away from z = 0.
std::vector<cplx> reference_z_grid(const Lattice &lat, int count);

SpectralCurve sample_curve(const PhasePoint &pp, const Lattice &lat, const std::vector<cplx> &z_grid);

struct CellSearchConfig {
    int grid = 24;            // initial points per cell direction
    int max_refinements = 3;  // grid doublings
    double exclusion = 0.02;  // reduced radius around z = 0 left out of the search
    double newton_tol = 1e-14;
    int max_newton = 60;
};

struct CellZero {
    cplx z;
    int multiplicity = 1;
};

struct CellZeroSearch {
    std::vector<CellZero> zeros;
    int expected = 0;
    int found = 0; // counted with multiplicity
    int refinements = 0;
    bool complete() const { return found == expected; }
};

/// Zeros inside the centred cell of an elliptic function whose only pole in the cell is at z = 0,
/// excluding z = 0 itself. expected < 0 means: use the pole order at 0 (winding on a small circle).
CellZeroSearch find_cell_zeros(const std::function<cplx(cplx)> &F, const Lattice &lat, int expected,
                               const CellSearchConfig &cfg = {});

/// Pole order at z = 0 of F from the winding number on a circle of reduced radius r.
int pole_order_at_origin(const std::function<cplx(cplx)> &F, const Lattice &lat, double r = 0.01);

struct BranchPoint {
    cplx z;
    cplx k;
    int multiplicity = 1;
    double residual = 0;    // |R(k, z)|
    double dk_residual = 0; // |dR/dk (k, z)|
};

/// prod_{a<b} (mu_a - mu_b)^2 over eigenvalues of L(z).
cplx discriminant(const PhasePoint &pp, cplx z, const Lattice &lat);

/// Solutions of R = dR/dk = 0 in the centred cell, z != 0. Throws ConvergenceError when the
/// search cannot account for all 2g - 2 of them.
std::vector<BranchPoint> branch_points(const PhasePoint &pp, const Lattice &lat, const CellSearchConfig &cfg = {});

/// Newton polish of (z, k) on the pair of equations (R, dR/dk).
BranchPoint polish_branch_point(const PhasePoint &pp, const Lattice &lat, cplx z, cplx k);

struct AsymptoticsConfig {
    double ray_angle = 0.37;
    double start_radius = 0.02; // |z| of the first sample, absolute
    int levels = 7;             // halvings of |z|
    double stabilization_tol = 1e-7;
};

/// Limits of k_alpha(z) * z as z -> 0 along a ray, Richardson-extrapolated in z.
std::vector<cplx> z0_asymptotics(const PhasePoint &pp, const Lattice &lat, const AsymptoticsConfig &cfg = {});

struct RankAudit {
    int rank = 0;
    int tangent_dimension = 0;
    std::vector<double> singular_values;
    double gap = 0; // s_rank / s_{rank+1}
    bool ill_conditioned = false;
};

/// Rank of d r_j(z_m) restricted to directions tangent to the orbit with f_ii fixed.
RankAudit independent_integrals_rank(const PhasePoint &pp, const Lattice &lat, const std::vector<cplx> &z_grid,
                                     double step = 1e-3);

/// Columns spanning the constrained tangent space in packed (x, p, vec f) coordinates.
CMatrix constrained_tangent_basis(const PhasePoint &pp);

} // namespace spincal
