#include <doctest.h>

#include "spincal/errors.hpp"
#include "spincal/orbit.hpp"
#include "support.hpp"

#include <array>
#include <cmath>

using namespace spincal;
using spincal::testing::cauchy_gradient;
using spincal::testing::max_abs;
using spincal::testing::random_matrix;

namespace {

OrbitSpec spec(int N, int l, std::vector<cplx> lambdas)
{
    OrbitSpec s;
    s.N = N;
    s.l = l;
    s.lambdas = std::move(lambdas);
    return s;
}

const std::array<OrbitSpec, 4> &standard_specs()
{
    static const std::array<OrbitSpec, 4> specs{spec(2, 1, {4.0}), spec(3, 1, {6.0}), spec(3, 2, {2.0, 4.0}),
                                                spec(4, 2, {cplx(3, 1), cplx(5, -1)})};
    return specs;
}

} // namespace

TEST_CASE("counter rng reproduces the SplitMix64 reference stream")
{
    CounterRng zero(0);
    CHECK(zero.next_u64() == 0xe220a8397b1dcdafULL);
    CHECK(zero.next_u64() == 0x6e789e6aa1b965f4ULL);
    CHECK(zero.next_u64() == 0x06c45d188009454fULL);

    CounterRng keyed(42, 7);
    CHECK(keyed.next_u64() == 0x75a694080932a32fULL);
    CHECK(keyed.next_u64() == 0x369337cb7f52cb3aULL);

    CounterRng a(5), b(5), c(6);
    CHECK(a.normal() == b.normal());
    CHECK(a.normal() != c.normal());

    CounterRng r(11);
    double mean = 0, var = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double x = r.normal();
        mean += x;
        var += x * x;
    }
    mean /= n;
    var = var / n - mean * mean;
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(var - 1) < 0.02);
}

TEST_CASE("orbit spec validation")
{
    CHECK_NOTHROW(spec(3, 2, {2.0, 4.0}).validate());
    CHECK_THROWS_AS(spec(3, 0, {}).validate(), ConfigError);
    CHECK_THROWS_AS(spec(3, 3, {1.0, 2.0, 3.0}).validate(), ConfigError);
    CHECK_THROWS_AS(spec(3, 2, {3.0, 3.0}).validate(), ConfigError);
    CHECK_THROWS_AS(spec(3, 1, {5.0}).validate(), ConfigError);
    CHECK_THROWS_AS(spec(3, 2, {0.0, 6.0}).validate(), ConfigError);
}

TEST_CASE("sampled orbits satisfy the invariants")
{
    for (const auto &s : standard_specs())
        for (std::uint64_t seed : {1u, 2u, 3u, 99u}) {
            CAPTURE(s.N);
            CAPTURE(s.l);
            CAPTURE(seed);
            const SpinMatrix f = sample_orbit(s, seed);
            const SpinCheck chk = check_spin_matrix(f, s);
            CHECK(chk.rank == s.l);
            CHECK(chk.diagonal_residual < 1e-12 * s.diagonal);
            CHECK(chk.eigenvalue_residual < 1e-9);
        }

    const SpinMatrix f2 = sample_orbit(spec(2, 1, {4.0}), 8);
    CHECK(std::abs(f2(0, 1) * f2(1, 0) - 4.0) < 1e-10);

    const auto ev = eigenvalues(sample_orbit(spec(3, 1, {6.0}), 8));
    int near_six = 0;
    for (auto e : ev)
        near_six += std::abs(e - 6.0) < 1e-9;
    CHECK(near_six == 1);

    const SpinMatrix a = sample_orbit(standard_specs()[2], 17);
    const SpinMatrix b = sample_orbit(standard_specs()[2], 17);
    const SpinMatrix c = sample_orbit(standard_specs()[2], 18);
    CHECK((a - b).norm() == 0.0);
    CHECK((a - c).norm() > 1e-3);

    OrbitSpec other = spec(3, 1, {7.5});
    other.diagonal = 2.5;
    const SpinMatrix g = sample_orbit(other, 4);
    CHECK(check_spin_matrix(g, other).ok(other, 1e-9));
}

TEST_CASE("kirillov bracket on linear and Casimir observables")
{
    const SpinMatrix f = sample_orbit(spec(3, 2, {2.0, 4.0}), 5);
    const int n = 3;
    auto unit = [n](int i, int j) {
        CMatrix e = CMatrix::Zero(n, n);
        e(i, j) = 1;
        return e;
    };

    CHECK(std::abs(kirillov_bracket(unit(0, 1), unit(1, 0), f) - (f(0, 0) - f(1, 1))) < 1e-14);
    CHECK(std::abs(kirillov_bracket(unit(0, 1), unit(1, 0), f)) < 1e-11);
    // {f_ij, f_kl} = delta_jk f_il - delta_il f_kj
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k)
                for (int l = 0; l < n; ++l) {
                    const cplx expect = (j == k ? f(i, l) : 0.0) - (i == l ? f(k, j) : 0.0);
                    CHECK(std::abs(kirillov_bracket(unit(i, j), unit(k, l), f) - expect) < 1e-14);
                }

    CounterRng rng(3);
    const CMatrix a = random_matrix(rng, n);
    CHECK(std::abs(kirillov_bracket(a, a, f)) < 1e-12);

    const CMatrix grad_tr2 = 2.0 * f.transpose();
    const CMatrix grad_tr3 = 3.0 * (f * f).transpose();
    for (int p = 0; p < n; ++p)
        for (int q = 0; q < n; ++q) {
            CHECK(std::abs(kirillov_bracket(grad_tr2, unit(p, q), f)) < 1e-10);
            CHECK(std::abs(kirillov_bracket(grad_tr3, unit(p, q), f)) < 1e-10);
        }
    CHECK_THROWS_AS(kirillov_bracket(CMatrix::Zero(2, 2), unit(0, 0), f), ConfigError);
}

TEST_CASE("kirillov bracket is antisymmetric and satisfies Jacobi")
{
    const int n = 3;
    CounterRng rng(21);
    const SpinMatrix f0 = sample_orbit(spec(3, 1, {6.0}), 12);

    using Obs = std::function<cplx(const CMatrix &)>;
    std::vector<Obs> obs;
    for (int k = 0; k < 3; ++k) {
        const CMatrix a = random_matrix(rng, n);
        obs.push_back([a](const CMatrix &f) { return (a * f).trace(); });
    }
    for (int k = 0; k < 3; ++k) {
        const CMatrix b = random_matrix(rng, n);
        const CMatrix c = random_matrix(rng, n);
        obs.push_back([b, c](const CMatrix &f) { return (b * f * c * f).trace(); });
    }

    auto bracket = [](const Obs &F, const Obs &G) -> Obs {
        return [F, G](const CMatrix &f) {
            return kirillov_bracket(cauchy_gradient(F, f), cauchy_gradient(G, f), f);
        };
    };

    double worst_anti = 0, worst_jacobi = 0;
    for (std::size_t a = 0; a < obs.size(); ++a)
        for (std::size_t b = a + 1; b < obs.size(); ++b) {
            worst_anti = std::max(worst_anti, std::abs(bracket(obs[a], obs[b])(f0) + bracket(obs[b], obs[a])(f0)));
            for (std::size_t c = b + 1; c < obs.size(); c += 2) {
                const cplx j = bracket(bracket(obs[a], obs[b]), obs[c])(f0) +
                               bracket(bracket(obs[b], obs[c]), obs[a])(f0) +
                               bracket(bracket(obs[c], obs[a]), obs[b])(f0);
                worst_jacobi = std::max(worst_jacobi, std::abs(j));
            }
        }
    CHECK(worst_anti < 1e-9);
    CHECK(worst_jacobi < 1e-9);
}

TEST_CASE("kirillov form")
{
    CounterRng rng(8);
    for (const auto &s : standard_specs()) {
        CAPTURE(s.N);
        CAPTURE(s.l);
        const SpinMatrix f = sample_orbit(s, 31);
        const CMatrix X = random_matrix(rng, s.N);
        const CMatrix Y = random_matrix(rng, s.N);
        const auto tx = make_tangent(f, X);
        const auto ty = make_tangent(f, Y);
        const cplx w = kirillov_form(f, tx, ty);
        const double scale = std::max(1.0, std::abs(w));

        CHECK(std::abs(kirillov_form(f, tx, tx)) < 1e-12 * f.norm() * X.squaredNorm());
        CHECK(std::abs(w + kirillov_form(f, ty, tx)) < 1e-12 * scale);
        CHECK(std::abs(kirillov_form(f, make_tangent(f, X + cplx(2.5, -1) * CMatrix::Identity(s.N, s.N)), ty) - w) <
              1e-11 * scale);
        CHECK(std::abs(kirillov_form(f, make_tangent(f, X + 0.3 * f * f - 0.7 * f), ty) - w) < 1e-10 * scale);

        // sum over unordered eigenbasis pairs equals -Tr(f[X,Y])
        const cplx kir2 = kirillov_form_eigenbasis(f, tx.U, ty.U);
        CHECK(std::abs(kir2 + w) < 1e-9 * scale);

        // tangents have no component inside an eigenspace
        Eigen::ComplexEigenSolver<CMatrix> es(f);
        const CMatrix u = es.eigenvectors().partialPivLu().solve(tx.U * es.eigenvectors());
        const auto &lam = es.eigenvalues();
        double inside = 0;
        for (int i = 0; i < s.N; ++i)
            for (int j = 0; j < s.N; ++j)
                if (std::abs(lam(i) - lam(j)) < 1e-8)
                    inside = std::max(inside, std::abs(u(i, j)));
        CHECK(inside < 1e-10 * std::max(1.0, u.norm()));
    }
}

TEST_CASE("kirillov form is nondegenerate on the orbit")
{
    for (const auto &s : standard_specs()) {
        CAPTURE(s.N);
        CAPTURE(s.l);
        const SpinMatrix f = sample_orbit(s, 44);
        const int n = s.N;
        std::vector<OrbitTangent> basis;
        CMatrix images(n * n, n * n);
        for (int k = 0; k < n * n; ++k) {
            CMatrix e = CMatrix::Zero(n, n);
            e(k % n, k / n) = 1;
            basis.push_back(make_tangent(f, e));
            images.col(k) = Eigen::Map<const CVector>(basis.back().U.data(), n * n);
        }
        CMatrix gram(n * n, n * n);
        for (int a = 0; a < n * n; ++a)
            for (int b = 0; b < n * n; ++b)
                gram(a, b) = kirillov_form(f, basis[a], basis[b]);
        CHECK(numerical_rank(images) == orbit_dimension(s));
        CHECK(numerical_rank(gram) == orbit_dimension(s));

        const CMatrix gens = constrained_generators(f);
        CHECK(gens.cols() == orbit_dimension(s) - (n - 1));
        for (Eigen::Index c = 0; c < gens.cols(); ++c) {
            const CMatrix X = Eigen::Map<const CMatrix>(gens.col(c).data(), n, n);
            const CMatrix U = make_tangent(f, X).U;
            CHECK(U.diagonal().cwiseAbs().maxCoeff() < 1e-10 * std::max(1.0, U.norm()));
        }
    }
}

TEST_CASE("orbit dimension")
{
    CHECK(orbit_dimension(2, 1) == 2);
    CHECK(orbit_dimension(3, 1) == 4);
    CHECK(orbit_dimension(3, 2) == 6);
    CHECK(orbit_dimension(spec(4, 2, {cplx(3, 1), cplx(5, -1)})) == 10);
}

TEST_CASE("casimirs")
{
    const SpinMatrix f = sample_orbit(spec(2, 1, {4.0}), 2);
    const auto c = casimirs(f, 2);
    REQUIRE(c.size() == 2);
    CHECK(std::abs(c[0] - 4.0) < 1e-12);
    CHECK(std::abs(c[1] - 16.0) < 1e-10);

    CounterRng rng(4);
    for (const auto &s : standard_specs()) {
        const SpinMatrix g = sample_orbit(s, 6);
        const auto cg = casimirs(g, 4);
        CHECK(std::abs(cg[0] - 2.0 * s.N) < 1e-11);
        const CMatrix h = CMatrix::Identity(s.N, s.N) + 0.4 * random_matrix(rng, s.N);
        const CMatrix conj = h.partialPivLu().solve(g * h);
        const auto cc = casimirs(conj, 4);
        for (int m = 0; m < 4; ++m)
            CHECK(std::abs(cc[m] - cg[m]) < 1e-10 * std::max(1.0, std::abs(cg[m])));
    }
    CHECK_THROWS_AS(casimirs(f, 0), ConfigError);
}

TEST_CASE("torus balancing keeps the orbit and the diagonal")
{
    const OrbitSpec s = spec(3, 2, {2.0, 4.0});
    SpinMatrix f = sample_orbit(s, 9);
    f.row(0) *= 50.0;
    f.col(0) /= 50.0;
    const SpinMatrix g = torus_balance(f);
    CHECK(check_spin_matrix(g, s).ok(s, 1e-9));
    for (int i = 0; i < 3; ++i) {
        const double row = g.row(i).norm(), col = g.col(i).norm();
        CHECK(std::abs(row - col) < 1e-4 * (row + col));
    }
    CHECK(std::abs(g(0, 1) * g(1, 0) - f(0, 1) * f(1, 0)) < 1e-9);
}
