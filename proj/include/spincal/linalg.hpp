#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <numeric>
#include <vector>

namespace spincal {

using cplx = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RVector = Eigen::VectorXd;

/// Singular values below rel_tol * largest count as zero.
inline int numerical_rank(const CMatrix &m, double rel_tol = 1e-9)
{
    if (m.size() == 0)
        return 0;
    Eigen::JacobiSVD<CMatrix> svd(m);
    const auto &s = svd.singularValues();
    if (s.size() == 0 || s(0) == 0.0)
        return 0;
    int r = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (s(i) > rel_tol * s(0))
            ++r;
    return r;
}

/// Orthonormal basis (columns) of the right null space, threshold relative to the largest singular value.
inline CMatrix null_space(const CMatrix &m, double rel_tol = 1e-9)
{
    Eigen::JacobiSVD<CMatrix> svd(m, Eigen::ComputeFullV);
    const auto &s = svd.singularValues();
    const double top = s.size() ? s(0) : 0.0;
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (s(i) > rel_tol * top)
            ++r;
    return svd.matrixV().rightCols(m.cols() - r);
}

/// Coefficients c_0..c_N of det(s I + A) = sum_j c_j s^{N-j}, c_0 = 1 (Faddeev-LeVerrier).
inline std::vector<cplx> char_poly_coefficients(const CMatrix &a)
{
    const Eigen::Index n = a.rows();
    const CMatrix b = -a; // det(sI + A) = det(sI - B)
    std::vector<cplx> c(n + 1);
    c[0] = 1;
    CMatrix m = CMatrix::Zero(n, n);
    const CMatrix id = CMatrix::Identity(n, n);
    for (Eigen::Index k = 1; k <= n; ++k) {
        m = b * m + c[k - 1] * id;
        c[k] = -(b * m).trace() / double(k);
    }
    return c;
}

/// Evaluate sum_j c_j s^{N-j} and its s-derivative.
inline std::pair<cplx, cplx> eval_poly(const std::vector<cplx> &c, cplx s)
{
    cplx v = 0, d = 0;
    for (const auto &cj : c) {
        d = d * s + v;
        v = v * s + cj;
    }
    return {v, d};
}

/// Roots of sum_j c_j s^{N-j} by Aberth-Ehrlich iteration.
inline std::vector<cplx> polynomial_roots(const std::vector<cplx> &c)
{
    const std::size_t n = c.size() - 1;
    std::vector<cplx> r(n);
    if (n == 0)
        return r;
    double bound = 0;
    for (std::size_t j = 1; j <= n; ++j)
        bound = std::max(bound, std::pow(std::abs(c[j] / c[0]), 1.0 / double(j)));
    bound = 2 * bound + 1e-3;
    for (std::size_t i = 0; i < n; ++i)
        r[i] = std::polar(bound * 0.5, 2 * std::numbers::pi * (double(i) + 0.25) / double(n) + 0.4);
    for (int it = 0; it < 500; ++it) {
        double change = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto [v, d] = eval_poly(c, r[i]);
            if (v == 0.0)
                continue;
            const cplx ratio = v / d;
            cplx sum = 0;
            for (std::size_t j = 0; j < n; ++j)
                if (j != i)
                    sum += 1.0 / (r[i] - r[j]);
            const cplx step = ratio / (1.0 - ratio * sum);
            r[i] -= step;
            change = std::max(change, std::abs(step) / (1.0 + std::abs(r[i])));
        }
        if (change < 1e-16)
            break;
    }
    return r;
}

/// Permutation perm minimizing sum |a[i] - b[perm[i]]| (exhaustive, small sizes only).
inline std::vector<int> best_assignment(const std::vector<cplx> &a, const std::vector<cplx> &b)
{
    const int n = int(a.size());
    std::vector<int> perm(n), best;
    std::iota(perm.begin(), perm.end(), 0);
    double best_cost = std::numeric_limits<double>::infinity();
    do {
        double cost = 0;
        for (int i = 0; i < n; ++i)
            cost += std::abs(a[i] - b[perm[i]]);
        if (cost < best_cost) {
            best_cost = cost;
            best = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

/// Largest distance between two multisets after optimal matching.
inline double multiset_distance(const std::vector<cplx> &a, const std::vector<cplx> &b)
{
    if (a.size() != b.size())
        return std::numeric_limits<double>::infinity();
    const auto perm = best_assignment(a, b);
    double d = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        d = std::max(d, std::abs(a[i] - b[perm[i]]));
    return d;
}

inline std::vector<cplx> eigenvalues(const CMatrix &m)
{
    Eigen::ComplexEigenSolver<CMatrix> es(m, false);
    const auto &ev = es.eigenvalues();
    return {ev.data(), ev.data() + ev.size()};
}

/// Unit vector spanning the (numerically) one-dimensional right null space of m.
inline CVector smallest_right_singular_vector(const CMatrix &m)
{
    Eigen::JacobiSVD<CMatrix> svd(m, Eigen::ComputeFullV);
    return svd.matrixV().col(m.cols() - 1);
}

} // namespace spincal
