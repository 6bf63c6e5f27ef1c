#pragma once

#include "spincal/elliptic.hpp"
#include "spincal/linalg.hpp"
#include "spincal/orbit.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace spincal {

enum class Variant { rational, elliptic };

/// Positions, momenta and spin variables of N particles.
struct PhasePoint {
    CVector x;
    CVector p;
    SpinMatrix f;

    int size() const { return int(x.size()); }

    /// Flatten as [x, p, vec(f) column-major].
    CVector pack() const;
    static PhasePoint unpack(const CVector &y, int N);
};

/// Seeded initial data: positions spread along a complex direction with jitter, complex momenta,
/// spins from sample_orbit(spec, seed).
struct InitialLayout {
    double spacing = 0.7;
    cplx direction{1.0, 0.3};
    double jitter = 0.15;
    double momentum_scale = 0.5;
};
PhasePoint seeded_phase_point(const OrbitSpec &spec, std::uint64_t seed, const InitialLayout &layout = {});

constexpr double default_collision_guard = 1e-6;

/// Throws CollisionError when two positions are closer than guard (reduced lattice distance).
void check_collisions(const PhasePoint &pp, const Lattice &lat, Variant variant,
                      double guard = default_collision_guard);

/// Pair potential and its derivative: 1/x^2 (rational) or wp(x) (elliptic).
struct PairPotential {
    cplx value;
    cplx derivative;
};
PairPotential pair_potential(cplx x, const Lattice &lat, Variant variant);

/// 1/2 sum p^2 - 1/2 sum_{i != j} f_ij f_ji V(x_i - x_j).
cplx hamiltonian(const PhasePoint &pp, const Lattice &lat, Variant variant,
                 double guard = default_collision_guard);

/// dH/df_ij, the matrix fed to kirillov_bracket for the spin part of the flow.
CMatrix hamiltonian_spin_gradient(const PhasePoint &pp, const Lattice &lat, Variant variant);

struct PhaseVelocity {
    CVector dx;
    CVector dp;
    CMatrix df;
};

/// Gradient of an observable in (x, p, f) coordinates.
struct PhaseGradient {
    CVector dx;
    CVector dp;
    CMatrix df;
};

/// Poisson bracket inverse to sum dp^dx + Tr(f[X,Y]):
/// {F, G} = sum_i (dF/dp_i dG/dx_i - dF/dx_i dG/dp_i) - kirillov_bracket(dF/df, dG/df, f).
cplx phase_bracket(const PhaseGradient &F, const PhaseGradient &G, const SpinMatrix &f);

/// Tangent vector (dx, dp, [f, X]) carried with its generator X.
struct PhaseTangent {
    CVector dx;
    CVector dp;
    CMatrix X;
};

/// sum_i (dp_i(u) dx_i(v) - dp_i(v) dx_i(u)) + Tr(f [X_u, X_v]).
cplx symplectic_form(const SpinMatrix &f, const PhaseTangent &u, const PhaseTangent &v);

/// Hamiltonian vector field of an observable: dx = dF/dp, dp = -dF/dx, generator X = (dF/df)^T.
PhaseTangent hamiltonian_vector_field(const PhaseGradient &F);

/// Flow of H under phase_bracket: dx = p, dp = -dH/dx, df = [W, f] with W_ij = f_ij V(x_i - x_j), W_ii = 0.
PhaseVelocity eom(const PhasePoint &pp, const Lattice &lat, Variant variant,
                  double guard = default_collision_guard);

struct IntegratorConfig {
    double rtol = 1e-10;
    double atol = 1e-12;
    double initial_step = 1e-3;
    double min_step = 1e-12;
    std::size_t max_steps = 5'000'000;
    double collision_guard = default_collision_guard;
    /// Sample times in [0, T]; empty means `samples` uniformly spaced points including 0 and T.
    std::vector<double> sample_times;
    int samples = 101;
};

struct IntegratorStats {
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    std::size_t rhs_evaluations = 0;
    double max_local_error = 0; // largest accepted scaled error estimate
};

struct Trajectory {
    std::vector<double> times;
    std::vector<PhasePoint> states;
    IntegratorStats stats;
    bool failed = false;
    std::string failure;
};

/// Dormand-Prince 5(4) with local error control, landing exactly on each sample time.
/// Step failures (collisions, step below min_step) return the partial trajectory with failed = true.
Trajectory integrate(const PhasePoint &pp0, double T, const Lattice &lat, Variant variant,
                     const IntegratorConfig &cfg = {});

struct ConservationReport {
    double hamiltonian = 0;
    double diagonal = 0;
    double spin_eigenvalues = 0;
    double char_poly = 0;
    std::vector<double> char_poly_per_z; // worst coefficient for each z
    double worst() const;
};

/// Max relative deviation |q(t) - q(0)| / max(|q(0)|, 1) over the trajectory.
ConservationReport conservation_report(const Trajectory &traj, const Lattice &lat, Variant variant,
                                       const std::vector<cplx> &z_grid);

/// Involution p -> -p, f -> f^T reversing the flow.
PhasePoint time_reversed(const PhasePoint &pp);

/// CSV header and rows: t, x<i>_re, x<i>_im, p<i>_re, p<i>_im, f<i>_<j>_re, f<i>_<j>_im (1-based, f row-major).
std::vector<std::string> trajectory_columns(int N);
void write_trajectory_csv(std::ostream &out, const Trajectory &traj);

} // namespace spincal
