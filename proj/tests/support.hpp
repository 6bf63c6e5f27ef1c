#pragma once

#include "spincal/linalg.hpp"
#include "spincal/rng.hpp"

#include <complex>
#include <functional>
#include <numbers>

namespace spincal::testing {

inline CMatrix random_matrix(CounterRng &rng, int n, double scale = 1.0)
{
    CMatrix m(n, n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i)
            m(i, j) = scale * rng.complex_normal();
    return m;
}

/// Derivative of a holomorphic function at t = 0 by a trapezoid Cauchy integral;
/// exact for polynomials of degree < points.
inline cplx cauchy_derivative(const std::function<cplx(cplx)> &g, double radius = 0.5, int points = 16)
{
    cplx acc = 0;
    for (int k = 0; k < points; ++k) {
        const cplx t = std::polar(radius, 2 * std::numbers::pi * k / points);
        acc += g(t) / t;
    }
    return acc / double(points);
}

/// Gradient matrix dF/df_ij of a holomorphic matrix function.
inline CMatrix cauchy_gradient(const std::function<cplx(const CMatrix &)> &F, const CMatrix &f,
                               double radius = 0.5, int points = 16)
{
    const Eigen::Index n = f.rows();
    CMatrix g(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            g(i, j) = cauchy_derivative(
                [&](cplx t) {
                    CMatrix ft = f;
                    ft(i, j) += t;
                    return F(ft);
                },
                radius, points);
    return g;
}

inline double max_abs(const CMatrix &m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

} // namespace spincal::testing
