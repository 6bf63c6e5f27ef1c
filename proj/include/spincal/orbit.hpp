#pragma once

#include "spincal/linalg.hpp"

#include <cstdint>
#include <vector>

namespace spincal {

/// Rank-l coadjoint orbit data: N particles, l nonzero eigenvalues of f, common diagonal value.
struct OrbitSpec {
    int N = 2;
    int l = 1;
    std::vector<cplx> lambdas{4.0};
    double diagonal = 2.0;
    /// Per-particle diagonal values; empty means every f_ii = diagonal. Unequal values break integrability.
    std::vector<double> diagonal_values;

    std::vector<double> diagonal_targets() const;

    /// Throws ConfigError on violated invariants.
    void validate() const;
};

/// Spin variables f are plain N x N complex matrices; check_spin_matrix audits the orbit invariants.
using SpinMatrix = CMatrix;

struct SpinCheck {
    int rank = 0;
    double diagonal_residual = 0;
    double eigenvalue_residual = 0;
    bool ok(const OrbitSpec &spec, double tol) const;
};

SpinCheck check_spin_matrix(const SpinMatrix &f, const OrbitSpec &spec);

/// Tangent vector U = [f, X] to the orbit through f, carried with its generator.
struct OrbitTangent {
    CMatrix X;
    CMatrix U;
};

OrbitTangent make_tangent(const SpinMatrix &f, const CMatrix &X);

struct SampleOptions {
    double constraint_tol = 1e-12;
    int max_attempts = 20;
    int max_newton = 200;
};

/// f = g^-1 diag(lambdas, 0...) g for a seeded random g, corrected to f_ii = spec.diagonal
/// along the orbit. Throws ConvergenceError after max_attempts restarts.
SpinMatrix sample_orbit(const OrbitSpec &spec, std::uint64_t seed, const SampleOptions &opt = {});

/// {F, G}(f) for observables with gradient matrices gradF_ij = dF/df_ij, gradG_ij = dG/df_ij.
cplx kirillov_bracket(const CMatrix &gradF, const CMatrix &gradG, const SpinMatrix &f);

/// Change of f under the flow of an observable with gradient grad: {G, f} = [grad^T, f].
CMatrix kirillov_flow(const CMatrix &grad, const SpinMatrix &f);

/// Tr(f [X, Y]).
cplx kirillov_form(const SpinMatrix &f, const OrbitTangent &tX, const OrbitTangent &tY);

/// Sum over unordered pairs i<j with lambda_i != lambda_j of (U_ij V_ji - V_ij U_ji)/(lambda_i - lambda_j),
/// evaluated after diagonalizing f. Equals -Tr(f[X,Y]).
cplx kirillov_form_eigenbasis(const SpinMatrix &f, const CMatrix &U, const CMatrix &V);

int orbit_dimension(const OrbitSpec &spec);
int orbit_dimension(int N, int l);

/// [Tr f, Tr f^2, ..., Tr f^max_m].
std::vector<cplx> casimirs(const SpinMatrix &f, int max_m);

/// Jacobian (N x N^2) of Y -> diag([f, Y]) with Y flattened column-major.
CMatrix diagonal_constraint_jacobian(const SpinMatrix &f);

/// Basis (columns, vec of N x N generators X) of tangents [f, X] that keep every f_ii fixed,
/// reduced to a linearly independent set of images.
CMatrix constrained_generators(const SpinMatrix &f);

/// Balance |f_ij| against |f_ji| by a diagonal similarity (keeps the diagonal and the orbit).
SpinMatrix torus_balance(const SpinMatrix &f);

} // namespace spincal
