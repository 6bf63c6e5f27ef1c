#include "spincal/orbit.hpp"

#include "spincal/errors.hpp"
#include "spincal/rng.hpp"

#include <cmath>
#include <string>

namespace spincal {

void OrbitSpec::validate() const
{
    if (N < 2)
        throw ConfigError("orbit: N must be at least 2");
    if (l < 1 || l > N - 1)
        throw ConfigError("orbit: rank l must satisfy 1 <= l <= N-1");
    if (int(lambdas.size()) != l)
        throw ConfigError("orbit: expected " + std::to_string(l) + " eigenvalues");
    cplx sum = 0;
    double scale = 1;
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
        if (std::abs(lambdas[i]) < 1e-12)
            throw ConfigError("orbit: eigenvalues must be nonzero");
        for (std::size_t j = 0; j < i; ++j)
            if (std::abs(lambdas[i] - lambdas[j]) < 1e-12 * (1 + std::abs(lambdas[i])))
                throw ConfigError("orbit: eigenvalues must be pairwise distinct");
        sum += lambdas[i];
        scale += std::abs(lambdas[i]);
    }
    if (!diagonal_values.empty() && int(diagonal_values.size()) != N)
        throw ConfigError("orbit: diagonal_values must have N entries");
    double trace = 0;
    for (double d : diagonal_targets())
        trace += d;
    if (std::abs(sum - trace) > 1e-9 * scale)
        throw ConfigError("orbit: eigenvalues must sum to the trace fixed by the diagonal");
}

std::vector<double> OrbitSpec::diagonal_targets() const
{
    if (!diagonal_values.empty())
        return diagonal_values;
    return std::vector<double>(std::size_t(std::max(N, 0)), diagonal);
}

bool SpinCheck::ok(const OrbitSpec &spec, double tol) const
{
    return rank == spec.l && diagonal_residual <= tol && eigenvalue_residual <= tol;
}

SpinCheck check_spin_matrix(const SpinMatrix &f, const OrbitSpec &spec)
{
    SpinCheck out;
    out.rank = numerical_rank(f);
    const auto target = spec.diagonal_targets();
    for (Eigen::Index i = 0; i < f.rows() && i < Eigen::Index(target.size()); ++i)
        out.diagonal_residual = std::max(out.diagonal_residual, std::abs(f(i, i) - target[i]));

    std::vector<cplx> ev = eigenvalues(f);
    std::vector<cplx> lam = spec.lambdas;
    lam.resize(f.rows(), 0.0);
    out.eigenvalue_residual = multiset_distance(ev, lam);
    return out;
}

OrbitTangent make_tangent(const SpinMatrix &f, const CMatrix &X) { return {X, f * X - X * f}; }

CMatrix diagonal_constraint_jacobian(const SpinMatrix &f)
{
    const Eigen::Index n = f.rows();
    CMatrix a = CMatrix::Zero(n, n * n);
    // diag([f,Y])_i = sum_k f_ik Y_ki - Y_ik f_ki
    for (Eigen::Index col = 0; col < n; ++col)
        for (Eigen::Index row = 0; row < n; ++row) {
            if (row == col)
                continue;
            const Eigen::Index idx = col * n + row; // Y(row, col)
            a(col, idx) += f(col, row);
            a(row, idx) -= f(col, row);
        }
    return a;
}

SpinMatrix torus_balance(const SpinMatrix &f)
{
    const Eigen::Index n = f.rows();
    CMatrix g = f;
    for (int sweep = 0; sweep < 30; ++sweep) {
        double worst = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            double r = 0, c = 0;
            for (Eigen::Index j = 0; j < n; ++j)
                if (j != i) {
                    r += std::norm(g(i, j));
                    c += std::norm(g(j, i));
                }
            if (r == 0 || c == 0)
                continue;
            const double s = std::pow(r / c, 0.25);
            g.col(i) *= s;
            g.row(i) /= s;
            worst = std::max(worst, std::abs(std::log(s)));
        }
        if (worst < 1e-6)
            break;
    }
    return g;
}

namespace {

bool newton_to_diagonal(CMatrix &f, const std::vector<double> &target, const SampleOptions &opt)
{
    const Eigen::Index n = f.rows();
    const CMatrix id = CMatrix::Identity(n, n);
    double scale = 1.0;
    for (double t : target)
        scale = std::max(scale, std::abs(t));
    for (int it = 0; it < opt.max_newton; ++it) {
        CVector r(n);
        double res = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            r(i) = target[i] - f(i, i);
            res = std::max(res, std::abs(r(i)));
        }
        if (!std::isfinite(res))
            return false;
        if (res < 0.01 * opt.constraint_tol * scale)
            return true;
        const CMatrix a = diagonal_constraint_jacobian(f);
        const CVector y = a.completeOrthogonalDecomposition().solve(r);
        CMatrix step = Eigen::Map<const CMatrix>(y.data(), n, n);
        const double norm = step.norm();
        if (!std::isfinite(norm))
            return false;
        if (norm > 0.3)
            step *= 0.3 / norm;
        const CMatrix g = id + step;
        f = g.partialPivLu().solve(f * g);
        if (it % 10 == 9)
            f = torus_balance(f);
    }
    double res = 0;
    for (Eigen::Index i = 0; i < n; ++i)
        res = std::max(res, std::abs(f(i, i) - target[i]));
    return res < opt.constraint_tol * scale;
}

} // namespace

SpinMatrix sample_orbit(const OrbitSpec &spec, std::uint64_t seed, const SampleOptions &opt)
{
    spec.validate();
    const int n = spec.N;
    CMatrix lambda = CMatrix::Zero(n, n);
    for (int i = 0; i < spec.l; ++i)
        lambda(i, i) = spec.lambdas[i];

    for (int attempt = 0; attempt < opt.max_attempts; ++attempt) {
        CounterRng rng(seed, std::uint64_t(attempt));
        CMatrix g = CMatrix::Identity(n, n);
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i)
                g(i, j) += 0.5 * rng.complex_normal();
        Eigen::PartialPivLU<CMatrix> lu(g);
        if (std::abs(lu.determinant()) < 1e-3)
            continue;
        CMatrix f = torus_balance(lu.solve(lambda * g));
        const auto target = spec.diagonal_targets();
        if (!newton_to_diagonal(f, target, opt))
            continue;
        const SpinCheck chk = check_spin_matrix(f, spec);
        const double tol = opt.constraint_tol * std::max(1.0, f.norm());
        const double dscale = std::max(1.0, *std::max_element(target.begin(), target.end()));
        if (chk.rank == spec.l && chk.diagonal_residual <= opt.constraint_tol * dscale &&
            chk.eigenvalue_residual <= 1e3 * tol)
            return f;
    }
    throw ConvergenceError("sample_orbit: diagonal constraint did not converge");
}

cplx kirillov_bracket(const CMatrix &gradF, const CMatrix &gradG, const SpinMatrix &f)
{
    if (gradF.rows() != f.rows() || gradG.rows() != f.rows() || gradF.cols() != f.cols() ||
        gradG.cols() != f.cols())
        throw ConfigError("kirillov_bracket: shape mismatch");
    const CMatrix c = gradF * gradG - gradG * gradF;
    return (c.array() * f.array()).sum();
}

CMatrix kirillov_flow(const CMatrix &grad, const SpinMatrix &f)
{
    const CMatrix at = grad.transpose();
    return at * f - f * at;
}

cplx kirillov_form(const SpinMatrix &f, const OrbitTangent &tX, const OrbitTangent &tY)
{
    const CMatrix c = tX.X * tY.X - tY.X * tX.X;
    return (f * c).trace();
}

cplx kirillov_form_eigenbasis(const SpinMatrix &f, const CMatrix &U, const CMatrix &V)
{
    Eigen::ComplexEigenSolver<CMatrix> es(f);
    const CMatrix &p = es.eigenvectors();
    const auto lu = p.partialPivLu();
    const CMatrix u = lu.solve(U * p);
    const CMatrix v = lu.solve(V * p);
    const auto &lam = es.eigenvalues();
    const double tol = 1e-8 * std::max(1.0, lam.cwiseAbs().maxCoeff());
    cplx sum = 0;
    for (Eigen::Index i = 0; i < f.rows(); ++i)
        for (Eigen::Index j = i + 1; j < f.rows(); ++j) {
            const cplx d = lam(i) - lam(j);
            if (std::abs(d) < tol)
                continue;
            sum += (u(i, j) * v(j, i) - v(i, j) * u(j, i)) / d;
        }
    return sum;
}

int orbit_dimension(int N, int l) { return 2 * N * l - l * l - l; }

int orbit_dimension(const OrbitSpec &spec) { return orbit_dimension(spec.N, spec.l); }

std::vector<cplx> casimirs(const SpinMatrix &f, int max_m)
{
    if (max_m < 1)
        throw ConfigError("casimirs: max_m must be at least 1");
    std::vector<cplx> out;
    CMatrix power = f;
    for (int m = 1; m <= max_m; ++m) {
        out.push_back(power.trace());
        power = power * f;
    }
    return out;
}

CMatrix constrained_generators(const SpinMatrix &f)
{
    const Eigen::Index n = f.rows();
    CMatrix ad(n * n, n * n);
    for (Eigen::Index k = 0; k < n * n; ++k) {
        CMatrix e = CMatrix::Zero(n, n);
        e(k % n, k / n) = 1;
        const CMatrix u = f * e - e * f;
        ad.col(k) = Eigen::Map<const CVector>(u.data(), n * n);
    }
    const CMatrix keep = null_space(diagonal_constraint_jacobian(f), 1e-10);
    const CMatrix images = ad * keep;
    Eigen::JacobiSVD<CMatrix> svd(images, Eigen::ComputeThinV);
    const int r = numerical_rank(images);
    const auto &s = svd.singularValues();
    CMatrix out = keep * svd.matrixV().leftCols(r);
    for (int i = 0; i < r; ++i)
        out.col(i) /= s(i);
    return out;
}

} // namespace spincal
