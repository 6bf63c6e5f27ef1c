#pragma once

#include "spincal/rng.hpp"
#include "spincal/spectral.hpp"

#include <vector>

namespace spincal {

/// Null vector of 2kI + L(z) (or of its transpose), normalized to first component 1.
struct Section {
    CVector values;
    double residual = 0; // |(2kI + L) C| / |L|, or |C+ (2kI + L)| / |L|
    double gap = 0;      // second-smallest over largest singular value
};

/// Throws NormalizationError when |C_1| < 1e-10 before rescaling.
Section eigenvector(const PhasePoint &pp, const Lattice &lat, cplx z, cplx k);
Section adjoint_eigenvector(const PhasePoint &pp, const Lattice &lat, cplx z, cplx k);

/// <C+, C> = sum_i C+_i C_i.
cplx pairing(const CVector &adjoint, const CVector &vec);

/// The N values of k above z, sorted by (Re, Im); the index is the sheet label.
std::vector<cplx> sheets(const PhasePoint &pp, const Lattice &lat, cplx z);

/// det(2kI + L'(z)) with L' the matrix L without its first row and column.
cplx first_minor(const PhasePoint &pp, const Lattice &lat, cplx z, cplx k);

struct PairingLimit {
    double pairing = 0;    // extrapolated |<C+, C>| at the branch point
    double angle = 0;      // extrapolated separation of the colliding eigenvectors
    double spread = 0;     // difference between the two highest extrapolation orders
    std::vector<double> radii;
    std::vector<double> samples; // |<C+, C>| along the approach
};

/// |<C+, C>| along z_b + r e^{i theta}, r -> 0 on one colliding sheet, extrapolated in sqrt(r).
PairingLimit pairing_zero_check(const PhasePoint &pp, const Lattice &lat, const BranchPoint &bp, double start = 1e-5,
                                int levels = 8);

struct DivisorPoint {
    cplx z;
    cplx k;
    int sheet = 0;
    double residual = 0;       // |first minor|
    double curve_residual = 0; // |R(k, z)|
};

struct DivisorSearch {
    std::vector<DivisorPoint> points;         // first component of C vanishes
    std::vector<DivisorPoint> adjoint_points; // first component of C+ vanishes
    int expected = 0;                         // g - 1
    bool complete() const { return int(points.size()) == expected; }
};

/// Common zeros of R and the first minor inside the centred cell, split by which section loses its first component.
DivisorSearch divisor(const PhasePoint &pp, const Lattice &lat, const CellSearchConfig &cfg = {});

/// Newton polish of (z, k) on (R, first minor).
DivisorPoint polish_divisor_point(const PhasePoint &pp, const Lattice &lat, cplx z, cplx k);

/// Re-solve each point at a nearby phase point by Newton from the given positions. Throws TrackingError
/// when a point moves farther than `margin` times the smallest separation of the base points, or lands
/// on a point where the adjoint section loses its first component instead.
std::vector<DivisorPoint> track_divisor(const PhasePoint &pp, const Lattice &lat, const std::vector<DivisorPoint> &base,
                                        double margin = 0.2);

/// Gradients of z_i and k_i with respect to (x, p, f).
struct DivisorGradients {
    std::vector<DivisorPoint> base;
    std::vector<PhaseGradient> z;
    std::vector<PhaseGradient> k;
};

/// Central differences at steps h and h/2 with Richardson extrapolation.
DivisorGradients divisor_gradients(const PhasePoint &pp, const Lattice &lat, double fd_step = 1e-5,
                                   const CellSearchConfig &cfg = {});

struct BracketMatrix {
    CMatrix ZZ; // {z_i, z_j}
    CMatrix KK; // {k_i, k_j}
    CMatrix KZ; // {k_i, z_j}
    double max_zz() const;
    double max_kk() const;
    double max_kz_offdiagonal() const;
    double kz_diagonal_spread() const; // max |KZ_ii - mean| / |mean|
    cplx kz_mean() const;
};

BracketMatrix bracket_matrix(const DivisorGradients &grads, const SpinMatrix &f);
BracketMatrix darboux_check(const PhasePoint &pp, const Lattice &lat, double fd_step = 1e-5,
                            const CellSearchConfig &cfg = {});

struct ReducedFormFit {
    cplx c_hat;
    double residual = 0;     // |w_can - c w_alg| / |w_can| over all trials
    double antisymmetry = 0; // worst |w(u, v) + w(v, u)| over both forms
    int trials = 0;
};

/// Random tangent pairs to the reduced space (orbit, f_ii fixed, sum dx = sum dp = 0); least-squares
/// fit of sum dp^dx + Tr(f[X,Y]) against sum dk^dz.
ReducedFormFit reduced_form_check(const PhasePoint &pp, const Lattice &lat, int trials, std::uint64_t seed = 0,
                                  double fd_step = 1e-5);
ReducedFormFit reduced_form_fit(const DivisorGradients &grads, const PhasePoint &pp, int trials, std::uint64_t seed);

/// Random reduced tangent (dx, dp, X) with sum dx = sum dp = 0 and diag([f, X]) = 0.
PhaseTangent random_reduced_tangent(const PhasePoint &pp, CounterRng &rng);

} // namespace spincal
