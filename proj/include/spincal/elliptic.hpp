#pragma once

// Weierstrass sigma, zeta, wp and the Lame-type kernel
//
//     Phi(x, z) = sigma(z - x) / (sigma(z) sigma(x)) * exp(zeta(z) x)
//
// evaluated through q-series in v = pi z / (2 omega1) after reduction of the
// argument to the period parallelogram centred at the origin. The kernel is a
// template over the real type so that long double (or any type with the
// std::complex interface) can be substituted without touching callers.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "spincal/errors.hpp"

namespace spincal {

enum class LatticeKind { elliptic, trigonometric, rational };

template <class Real>
class BasicLattice {
public:
    using real_type = Real;
    using complex_type = std::complex<Real>;

    static constexpr Real default_precision = Real(1e-12);
    static constexpr Real default_guard = Real(1e-8);

    /// Lattice generated by 2*omega1, 2*omega2 with Im(omega2/omega1) > 0.
    static BasicLattice elliptic(complex_type omega1, complex_type omega2,
                                 Real precision_target = default_precision)
    {
        const complex_type tau = omega2 / omega1;
        if (!(tau.imag() > Real(0)))
            throw ConfigError("lattice requires Im(omega2/omega1) > 0");
        BasicLattice lat;
        lat.kind_ = LatticeKind::elliptic;
        lat.omega1_ = omega1;
        lat.omega2_ = omega2;
        lat.precision_ = precision_target;
        lat.q_ = std::exp(complex_type(0, pi()) * tau);
        lat.build_series();
        lat.eta2_ = (lat.eta1_ * omega2 - complex_type(0, pi() / 2)) / omega1;
        return lat;
    }

    /// omega2 -> i*infinity: sigma(z) = (2 omega1/pi) exp(eta1 z^2/(2 omega1)) sin(pi z/(2 omega1)).
    static BasicLattice trigonometric(complex_type omega1, Real precision_target = default_precision)
    {
        BasicLattice lat;
        lat.kind_ = LatticeKind::trigonometric;
        lat.omega1_ = omega1;
        lat.omega2_ = complex_type(std::numeric_limits<Real>::quiet_NaN(), 0);
        lat.precision_ = precision_target;
        lat.q_ = 0;
        lat.build_series();
        lat.eta2_ = complex_type(std::numeric_limits<Real>::quiet_NaN(), 0);
        return lat;
    }

    /// Both periods infinite: sigma(z) = z.
    static BasicLattice rational(Real precision_target = default_precision)
    {
        BasicLattice lat;
        lat.kind_ = LatticeKind::rational;
        lat.omega1_ = lat.omega2_ = complex_type(std::numeric_limits<Real>::infinity(), 0);
        lat.precision_ = precision_target;
        return lat;
    }

    LatticeKind kind() const { return kind_; }
    complex_type omega1() const { return omega1_; }
    complex_type omega2() const { return omega2_; }
    complex_type eta1() const { return eta1_; }
    complex_type eta2() const { return eta2_; }
    complex_type g2() const { return g2_; }
    complex_type g3() const { return g3_; }
    complex_type nome() const { return q_; }
    Real precision_target() const { return precision_; }
    Real guard_radius() const { return guard_; }
    std::size_t series_terms() const { return a_.size(); }

    /// Copy with a different guard radius (reduced coordinates).
    BasicLattice with_guard(Real guard) const
    {
        BasicLattice lat = *this;
        lat.guard_ = guard;
        return lat;
    }

    struct Reduced {
        complex_type z0; // representative in the centred cell
        long long m = 0; // z = z0 + 2 m omega1 + 2 n omega2
        long long n = 0;
        Real distance = 0; // distance to the nearest lattice point, reduced coordinates
    };

    Reduced reduce(complex_type z) const
    {
        Reduced r;
        switch (kind_) {
        case LatticeKind::rational:
            r.z0 = z;
            r.distance = std::abs(z);
            return r;
        case LatticeKind::trigonometric: {
            const complex_type u = z / (Real(2) * omega1_);
            r.m = std::llround(u.real());
            r.z0 = z - Real(2) * Real(r.m) * omega1_;
            r.distance = std::abs(u - Real(r.m));
            return r;
        }
        case LatticeKind::elliptic: {
            const complex_type a = Real(2) * omega1_, b = Real(2) * omega2_;
            const Real det = a.real() * b.imag() - a.imag() * b.real();
            const Real s = (z.real() * b.imag() - z.imag() * b.real()) / det;
            const Real t = (a.real() * z.imag() - a.imag() * z.real()) / det;
            r.m = std::llround(s);
            r.n = std::llround(t);
            r.z0 = z - Real(r.m) * a - Real(r.n) * b;
            r.distance = std::max(std::abs(s - Real(r.m)), std::abs(t - Real(r.n)));
            return r;
        }
        }
        return r;
    }

    /// Throws LatticePoleError when z sits inside the guard radius of a lattice point.
    Reduced reduce_checked(complex_type z, const char *what) const
    {
        Reduced r = reduce(z);
        if (r.distance < guard_)
            throw LatticePoleError(std::string(what) + ": argument within guard radius of a lattice point");
        return r;
    }

    // q-series coefficients a_n = q^{2n} / (1 - q^{2n}), n = 1..series_terms().
    const std::vector<complex_type> &series() const { return a_; }

    static constexpr Real pi() { return std::numbers::pi_v<Real>; }

private:
    void build_series()
    {
        a_.clear();
        const Real aq = std::abs(q_);
        if (aq > Real(0)) {
            // After reduction |Im v| <= pi Im(tau) / 2, so every series term is
            // bounded by n^2 |q|^n.
            const std::size_t max_terms = 2000;
            const Real stop = precision_ * Real(1e-4);
            complex_type q2n = 1;
            const complex_type q2 = q_ * q_;
            for (std::size_t n = 1;; ++n) {
                q2n *= q2;
                a_.push_back(q2n / (Real(1) - q2n));
                const Real bound = Real(n) * Real(n) * std::pow(aq, Real(n));
                if (bound < stop && std::abs(a_.back()) * Real(n * n * n * n * n) < stop)
                    break;
                if (n == max_terms)
                    throw PrecisionError("nome too close to the unit circle for the requested precision");
            }
        }
        complex_type s1 = 0, s3 = 0, s5 = 0;
        for (std::size_t k = 0; k < a_.size(); ++k) {
            const Real n = Real(k + 1);
            s1 += n * a_[k];
            s3 += n * n * n * a_[k];
            s5 += n * n * n * n * n * a_[k];
        }
        const Real p = pi();
        eta1_ = (p * p / (Real(12) * omega1_)) * (Real(1) - Real(24) * s1);
        const complex_type w2 = omega1_ * omega1_;
        g2_ = (p * p * p * p / (Real(12) * w2 * w2)) * (Real(1) + Real(240) * s3);
        g3_ = (p * p * p * p * p * p / (Real(216) * w2 * w2 * w2)) * (Real(1) - Real(504) * s5);
    }

    LatticeKind kind_ = LatticeKind::rational;
    complex_type omega1_{}, omega2_{}, eta1_{}, eta2_{}, g2_{}, g3_{}, q_{};
    Real precision_ = default_precision;
    Real guard_ = default_guard;
    std::vector<complex_type> a_;
};

using Lattice = BasicLattice<double>;
using cplx = std::complex<double>;

namespace detail {

// cot(v) - 1/v, accurate for small |v|.
template <class C>
C cot_minus_inverse(C v)
{
    using R = typename C::value_type;
    if (std::abs(v) < R(0.5)) {
        // (v cos v - sin v) / (v sin v), numerator summed as a series.
        C num = 0, term = v; // term = v^{2k+1} / (2k+1)!
        const C v2 = v * v;
        for (int k = 1; k < 40; ++k) {
            term *= v2 / R((2 * k) * (2 * k + 1));
            const C add = (k % 2 ? R(-1) : R(1)) * R(2 * k) * term;
            num += add;
            if (std::abs(add) <= std::numeric_limits<R>::epsilon() * std::abs(num) * R(1e-2))
                break;
        }
        return num / (v * std::sin(v));
    }
    return std::cos(v) / std::sin(v) - R(1) / v;
}

// Sums S_k = sum_n a_n n^p f(2 n v) for the q-series, with f = sin or cos.
template <class Real>
struct QSums {
    std::complex<Real> sin0 = 0, cos1 = 0, sin2 = 0; // p = 0 (sin), p = 1 (cos), p = 2 (sin)
};

template <class Real>
QSums<Real> qsums(const BasicLattice<Real> &lat, std::complex<Real> v)
{
    using C = std::complex<Real>;
    QSums<Real> s;
    const auto &a = lat.series();
    if (a.empty())
        return s;
    const C e = std::exp(C(0, 2) * v), einv = Real(1) / e;
    C ep = 1, em = 1;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const Real n = Real(k + 1);
        ep *= e;
        em *= einv;
        const C sn = (ep - em) / C(0, 2);
        const C cs = (ep + em) / Real(2);
        s.sin0 += a[k] * sn;
        s.cos1 += n * a[k] * cs;
        s.sin2 += n * n * a[k] * sn;
    }
    return s;
}

template <class Real>
std::complex<Real> log_sigma_reduced(const BasicLattice<Real> &lat, std::complex<Real> z0)
{
    using C = std::complex<Real>;
    const Real p = BasicLattice<Real>::pi();
    const C c = p / (Real(2) * lat.omega1());
    const C v = c * z0;
    C acc = std::log(Real(1) / c) + lat.eta1() * z0 * z0 / (Real(2) * lat.omega1()) + std::log(std::sin(v));
    const auto &a = lat.series();
    if (!a.empty()) {
        const C q2 = lat.nome() * lat.nome();
        const C cos2v = std::cos(Real(2) * v);
        C q2n = 1;
        for (std::size_t k = 0; k < a.size(); ++k) {
            q2n *= q2;
            const C num = Real(1) - Real(2) * q2n * cos2v + q2n * q2n;
            const C den = (Real(1) - q2n) * (Real(1) - q2n);
            acc += std::log(num / den);
        }
    }
    return acc;
}

template <class Real>
std::complex<Real> zeta_reduced(const BasicLattice<Real> &lat, std::complex<Real> z0, bool drop_pole)
{
    using C = std::complex<Real>;
    const Real p = BasicLattice<Real>::pi();
    const C c = p / (Real(2) * lat.omega1());
    const C v = c * z0;
    const auto s = qsums(lat, v);
    const C cot_part = drop_pole ? cot_minus_inverse(v) : std::cos(v) / std::sin(v);
    return lat.eta1() * z0 / lat.omega1() + c * (cot_part + Real(4) * s.sin0);
}

template <class Real>
std::complex<Real> quasi_shift(const BasicLattice<Real> &lat, long long m, long long n)
{
    return Real(2) * (Real(m) * lat.eta1() + (n != 0 ? Real(n) * lat.eta2() : std::complex<Real>(0)));
}

} // namespace detail

/// Natural logarithm of sigma(z), any branch. Valid away from lattice points.
template <class Real>
std::complex<Real> log_sigma(std::complex<Real> z, const BasicLattice<Real> &lat)
{
    using C = std::complex<Real>;
    if (lat.kind() == LatticeKind::rational)
        return std::log(z);
    const auto r = lat.reduce(z);
    C acc = detail::log_sigma_reduced(lat, r.z0);
    if (r.m != 0 || r.n != 0) {
        const C eta = detail::quasi_shift(lat, r.m, r.n) / Real(2);
        const C w = Real(r.m) * lat.omega1() + (r.n != 0 ? Real(r.n) * lat.omega2() : C(0));
        const long long parity = (r.m + r.n + r.m * r.n) & 1LL;
        acc += Real(2) * eta * (r.z0 + w);
        if (parity)
            acc += C(0, BasicLattice<Real>::pi());
    }
    return acc;
}

template <class Real>
std::complex<Real> sigma(std::complex<Real> z, const BasicLattice<Real> &lat)
{
    if (lat.kind() == LatticeKind::rational)
        return z;
    const auto r = lat.reduce(z);
    if (r.distance == Real(0))
        return 0;
    return std::exp(log_sigma(z, lat));
}

template <class Real>
std::complex<Real> zeta(std::complex<Real> z, const BasicLattice<Real> &lat)
{
    if (lat.kind() == LatticeKind::rational) {
        lat.reduce_checked(z, "zeta");
        return Real(1) / z;
    }
    const auto r = lat.reduce_checked(z, "zeta");
    return detail::zeta_reduced(lat, r.z0, false) + detail::quasi_shift(lat, r.m, r.n);
}

/// zeta(z) - 1/z, free of cancellation near z = 0.
template <class Real>
std::complex<Real> zeta_regular(std::complex<Real> z, const BasicLattice<Real> &lat)
{
    if (lat.kind() == LatticeKind::rational)
        return 0;
    const auto r = lat.reduce(z);
    if (r.m == 0 && r.n == 0)
        return detail::zeta_reduced(lat, r.z0, true);
    return zeta(z, lat) - Real(1) / z;
}

template <class Real>
std::complex<Real> wp(std::complex<Real> z, const BasicLattice<Real> &lat)
{
    using C = std::complex<Real>;
    if (lat.kind() == LatticeKind::rational) {
        lat.reduce_checked(z, "wp");
        return Real(1) / (z * z);
    }
    const auto r = lat.reduce_checked(z, "wp");
    const Real p = BasicLattice<Real>::pi();
    const C c = p / (Real(2) * lat.omega1());
    const C v = c * r.z0;
    const auto s = detail::qsums(lat, v);
    const C sn = std::sin(v);
    return -lat.eta1() / lat.omega1() + c * c * (Real(1) / (sn * sn) - Real(8) * s.cos1);
}

template <class Real>
std::complex<Real> wp_prime(std::complex<Real> z, const BasicLattice<Real> &lat)
{
    using C = std::complex<Real>;
    if (lat.kind() == LatticeKind::rational) {
        lat.reduce_checked(z, "wp_prime");
        return Real(-2) / (z * z * z);
    }
    const auto r = lat.reduce_checked(z, "wp_prime");
    const Real p = BasicLattice<Real>::pi();
    const C c = p / (Real(2) * lat.omega1());
    const C v = c * r.z0;
    const auto s = detail::qsums(lat, v);
    const C sn = std::sin(v), cs = std::cos(v);
    return c * c * c * (Real(-2) * cs / (sn * sn * sn) + Real(16) * s.sin2);
}

namespace detail {

template <class Real>
std::complex<Real> checked_exp(std::complex<Real> e, const char *what)
{
    if (e.real() > Real(700))
        throw OverflowError(std::string(what) + ": exponent out of range");
    return std::exp(e);
}

template <class Real>
std::complex<Real> log_sigma_ratio(std::complex<Real> x, std::complex<Real> z, const BasicLattice<Real> &lat,
                                   const char *what)
{
    lat.reduce_checked(x, what);
    lat.reduce_checked(z, what);
    lat.reduce_checked(z - x, what);
    return log_sigma(z - x, lat) - log_sigma(z, lat) - log_sigma(x, lat);
}

} // namespace detail

/// Phi(x, z) = sigma(z - x) / (sigma(z) sigma(x)) exp(zeta(z) x). Regular (zero) at z = x.
template <class Real>
std::complex<Real> phi(std::complex<Real> x, std::complex<Real> z, const BasicLattice<Real> &lat)
{
    lat.reduce_checked(x, "phi");
    lat.reduce_checked(z, "phi");
    if (lat.reduce(z - x).distance < lat.guard_radius())
        return sigma(z - x, lat) * detail::checked_exp(zeta(z, lat) * x - log_sigma(z, lat) - log_sigma(x, lat), "phi");
    const auto e = detail::log_sigma_ratio(x, z, lat, "phi") + zeta(z, lat) * x;
    return detail::checked_exp(e, "phi");
}

/// Phi(x, z) exp(-zeta(z) x): the kernel with its essential factor removed.
/// Entire in z - x, so z = x (mod lattice) gives an exact zero.
template <class Real>
std::complex<Real> phi_gauged(std::complex<Real> x, std::complex<Real> z, const BasicLattice<Real> &lat)
{
    lat.reduce_checked(x, "phi_gauged");
    lat.reduce_checked(z, "phi_gauged");
    const auto r = lat.reduce(z - x);
    if (r.distance < lat.guard_radius())
        return sigma(z - x, lat) * detail::checked_exp(-log_sigma(z, lat) - log_sigma(x, lat), "phi_gauged");
    return detail::checked_exp(detail::log_sigma_ratio(x, z, lat, "phi_gauged"), "phi_gauged");
}

/// Phi(x, z) exp(-x / z), meromorphic at z = 0 with leading term -1/z.
template <class Real>
std::complex<Real> phi_scaled(std::complex<Real> x, std::complex<Real> z, const BasicLattice<Real> &lat)
{
    const auto e = detail::log_sigma_ratio(x, z, lat, "phi_scaled") + zeta_regular(z, lat) * x;
    return detail::checked_exp(e, "phi_scaled");
}

/// d Phi / dx = Phi(x, z) [zeta(z) - zeta(z - x) - zeta(x)].
template <class Real>
std::complex<Real> phi_dx(std::complex<Real> x, std::complex<Real> z, const BasicLattice<Real> &lat)
{
    return phi(x, z, lat) * (zeta(z, lat) - zeta(z - x, lat) - zeta(x, lat));
}

} // namespace spincal
