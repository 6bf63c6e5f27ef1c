#include <doctest.h>

#include "spincal/dynamics.hpp"
#include "spincal/errors.hpp"
#include "spincal/spectral.hpp"
#include "support.hpp"

#include <sstream>

using namespace spincal;
using spincal::testing::cauchy_derivative;
using spincal::testing::random_matrix;

namespace {

const Lattice &test_lattice()
{
    static const Lattice lat = Lattice::elliptic(1.0, cplx(0.3, 1.1));
    return lat;
}

OrbitSpec spec(int N, int l, std::vector<cplx> lambdas)
{
    OrbitSpec s;
    s.N = N;
    s.l = l;
    s.lambdas = std::move(lambdas);
    return s;
}

PhasePoint two_body(cplx x1, cplx x2, cplx p1, cplx p2)
{
    PhasePoint pp;
    pp.x = CVector(2);
    pp.p = CVector(2);
    pp.x << x1, x2;
    pp.p << p1, p2;
    pp.f = sample_orbit(spec(2, 1, {4.0}), 3);
    return pp;
}

using Observable = std::function<cplx(const PhasePoint &)>;

// Gradient by Cauchy integrals in each coordinate: exact for polynomial observables,
// accurate to ~1e-12 for smooth ones at this radius.
PhaseGradient gradient(const Observable &F, const PhasePoint &pp, double radius = 1e-3)
{
    const int n = pp.size();
    PhaseGradient g{CVector(n), CVector(n), CMatrix(n, n)};
    for (int i = 0; i < n; ++i) {
        g.dx(i) = cauchy_derivative([&](cplx t) { PhasePoint q = pp; q.x(i) += t; return F(q); }, radius);
        g.dp(i) = cauchy_derivative([&](cplx t) { PhasePoint q = pp; q.p(i) += t; return F(q); }, radius);
    }
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            g.df(i, j) = cauchy_derivative([&](cplx t) { PhasePoint q = pp; q.f(i, j) += t; return F(q); }, radius);
    return g;
}

double rel(const CVector &a, const CVector &b) { return (a - b).norm() / std::max(1.0, b.norm()); }
double rel(const CMatrix &a, const CMatrix &b) { return (a - b).norm() / std::max(1.0, b.norm()); }

} // namespace

TEST_CASE("hamiltonian")
{
    const PhasePoint pp = two_body(0.0, 1.0, 1.0, -1.0);
    CHECK(std::abs(hamiltonian(pp, Lattice::rational(), Variant::rational) - (-3.0)) < 1e-12);

    CHECK_THROWS_AS(hamiltonian(two_body(0.0, 1e-7, 1.0, 1.0), Lattice::rational(), Variant::rational),
                    CollisionError);
    CHECK_THROWS_AS(hamiltonian(two_body(0.0, 2.0 + 1e-8, 1.0, 1.0), test_lattice(), Variant::elliptic),
                    CollisionError);

    // Interaction of two particles approaching the half period on a rectangular lattice.
    const Lattice rect = Lattice::elliptic(1.0, cplx(0, 1.3));
    const cplx mid = -4.0 * wp(cplx(1.0), rect);
    double prev = -std::numeric_limits<double>::infinity();
    for (double sep : {0.2, 0.4, 0.6, 0.8, 1.0}) {
        const PhasePoint q = two_body(0.0, sep, 0.3, -0.2);
        const cplx inter = hamiltonian(q, rect, Variant::elliptic) - 0.5 * (0.09 + 0.04);
        CHECK(std::abs(inter.imag()) < 1e-9);
        CHECK(inter.real() > prev);
        prev = inter.real();
    }
    CHECK(std::abs(prev - mid.real()) < 1e-10);

    // 1/2 Tr L^2 - 1/2 wp(z) (Tr f^2 - sum f_ii^2) is the elliptic Hamiltonian for every z.
    for (const auto &s : {spec(3, 1, {6.0}), spec(3, 2, {2.0, 4.0})}) {
        const PhasePoint q = seeded_phase_point(s, 5);
        const cplx h = hamiltonian(q, test_lattice(), Variant::elliptic);
        const cplx coupling = (q.f * q.f).trace() - q.f.diagonal().array().square().sum();
        for (cplx z : {cplx(0.31, 0.2), cplx(-0.45, 0.6), cplx(0.7, -0.33)}) {
            const CMatrix L = lax(q, z, test_lattice());
            const cplx from_lax = 0.5 * (L * L).trace() - 0.5 * wp(z, test_lattice()) * coupling;
            CHECK(std::abs(from_lax - h) < 1e-9 * std::max(1.0, std::abs(h)));
        }
    }
}

TEST_CASE("equations of motion match the bracket with H")
{
    for (Variant variant : {Variant::rational, Variant::elliptic})
        for (const auto &s : {spec(2, 1, {4.0}), spec(3, 1, {6.0}), spec(3, 2, {2.0, 4.0}),
                              spec(4, 2, {cplx(3, 1), cplx(5, -1)})}) {
            CAPTURE(s.N);
            CAPTURE(s.l);
            const Lattice lat = variant == Variant::rational ? Lattice::rational() : test_lattice();
            const PhasePoint pp = seeded_phase_point(s, 7);
            const PhaseVelocity v = eom(pp, lat, variant);

            CHECK(v.df.diagonal().cwiseAbs().maxCoeff() < 1e-10);
            CHECK(std::abs(v.dp.sum()) < 1e-10);

            const PhaseGradient gH = gradient([&](const PhasePoint &q) { return hamiltonian(q, lat, variant); }, pp);
            CHECK(rel(v.dx, gH.dp) < 1e-6);
            CHECK(rel(v.dp, CVector(-gH.dx)) < 1e-6);
            CHECK(rel(hamiltonian_spin_gradient(pp, lat, variant), gH.df) < 1e-6);

            const int n = s.N;
            CMatrix df(n, n);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) {
                    PhaseGradient e{CVector::Zero(n), CVector::Zero(n), CMatrix::Zero(n, n)};
                    e.df(i, j) = 1;
                    df(i, j) = phase_bracket(gH, e, pp.f);
                }
            CHECK(rel(v.df, df) < 1e-6);

            // the spin velocity is an orbit tangent: it vanishes in the eigenbasis blocks of f
            Eigen::ComplexEigenSolver<CMatrix> es(pp.f);
            const CMatrix u = es.eigenvectors().partialPivLu().solve(v.df * es.eigenvectors());
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j)
                    if (std::abs(es.eigenvalues()(i) - es.eigenvalues()(j)) < 1e-8)
                        CHECK(std::abs(u(i, j)) < 1e-9 * std::max(1.0, u.norm()));
        }
}

TEST_CASE("symplectic form inverts the phase bracket")
{
    const OrbitSpec s = spec(3, 2, {2.0, 4.0});
    const PhasePoint pp = seeded_phase_point(s, 2);
    CounterRng rng(77);
    auto quadratic = [&]() -> Observable {
        const CVector a = CVector::NullaryExpr(3, [&] { return rng.complex_normal(); });
        const CVector b = CVector::NullaryExpr(3, [&] { return rng.complex_normal(); });
        const CMatrix c = random_matrix(rng, 3), d = random_matrix(rng, 3), e = random_matrix(rng, 3);
        return [=](const PhasePoint &q) {
            return (a.array() * q.p.array().square()).sum() + (b.array() * q.x.array() * q.p.array()).sum() +
                   (c * q.f * d * q.f).trace() + (e * q.f).trace() * q.x(1);
        };
    };
    for (int trial = 0; trial < 4; ++trial) {
        const Observable F = quadratic(), G = quadratic();
        const PhaseGradient gF = gradient(F, pp, 0.5), gG = gradient(G, pp, 0.5);
        const cplx bracket = phase_bracket(gF, gG, pp.f);
        const cplx form = symplectic_form(pp.f, hamiltonian_vector_field(gF), hamiltonian_vector_field(gG));
        CHECK(std::abs(form - bracket) < 1e-10 * std::max(1.0, std::abs(bracket)));
        CHECK(std::abs(phase_bracket(gF, gG, pp.f) + phase_bracket(gG, gF, pp.f)) < 1e-10 * std::abs(bracket));
    }
    // {H, H} = 0
    const PhaseGradient gH =
        gradient([&](const PhasePoint &q) { return hamiltonian(q, test_lattice(), Variant::elliptic); }, pp);
    CHECK(std::abs(phase_bracket(gH, gH, pp.f)) < 1e-12);
}

TEST_CASE("integrator reproduces the two-body closed form")
{
    // f12 f21 = 4: x = x1 - x2 obeys x'' = -16/x^3, so x^2 = x0^2 + 2 x0 v0 t + (v0^2 - 16/x0^2) t^2.
    const PhasePoint pp = two_body(cplx(0.1, 0.2), cplx(-0.9, 0.1), cplx(0.2, 0.4), cplx(-0.1, 0.1));
    const cplx x0 = pp.x(0) - pp.x(1), v0 = pp.p(0) - pp.p(1);
    IntegratorConfig cfg;
    cfg.samples = 41;
    const Trajectory tr = integrate(pp, 4.0, Lattice::rational(), Variant::rational, cfg);
    REQUIRE_FALSE(tr.failed);
    REQUIRE(tr.states.size() == 41);
    double worst = 0;
    for (std::size_t k = 0; k < tr.states.size(); ++k) {
        const double t = tr.times[k];
        const cplx x = tr.states[k].x(0) - tr.states[k].x(1);
        const cplx exact = x0 * x0 + 2.0 * x0 * v0 * t + (v0 * v0 - 16.0 / (x0 * x0)) * t * t;
        worst = std::max(worst, std::abs(x * x - exact) / std::abs(exact));
    }
    CHECK(worst < 1e-8);
    CHECK(tr.stats.accepted > 0);
    CHECK(tr.stats.max_local_error <= 1.0);
    for (std::size_t k = 1; k < tr.times.size(); ++k)
        CHECK(tr.times[k] > tr.times[k - 1]);
    CHECK(tr.times.back() == 4.0);

    // tighter tolerance shrinks the error
    IntegratorConfig loose = cfg;
    loose.rtol = 1e-6;
    loose.atol = 1e-8;
    const Trajectory tl = integrate(pp, 4.0, Lattice::rational(), Variant::rational, loose);
    const cplx xe = x0 * x0 + 2.0 * x0 * v0 * 4.0 + (v0 * v0 - 16.0 / (x0 * x0)) * 16.0;
    const cplx xl = tl.states.back().x(0) - tl.states.back().x(1);
    const cplx xt = tr.states.back().x(0) - tr.states.back().x(1);
    CHECK(std::abs(xt * xt - xe) < std::abs(xl * xl - xe));
    CHECK(tl.stats.accepted < tr.stats.accepted);
}

TEST_CASE("integration conserves the orbit data and the energy")
{
    IntegratorConfig cfg;
    cfg.samples = 51;
    for (const auto &s : {spec(2, 1, {4.0}), spec(3, 2, {2.0, 4.0})}) {
        CAPTURE(s.N);
        const PhasePoint pp = seeded_phase_point(s, 3);
        const Trajectory tr = integrate(pp, 10.0, Lattice::rational(), Variant::rational, cfg);
        REQUIRE_FALSE(tr.failed);
        const auto rep = conservation_report(tr, Lattice::rational(), Variant::rational, {cplx(0.4, 0.3)});
        CHECK(rep.hamiltonian < 1e-8);
        CHECK(rep.spin_eigenvalues < 1e-8);
        CHECK(rep.diagonal < 1e-8);
        for (const auto &st : tr.states)
            CHECK(check_spin_matrix(st.f, s).ok(s, 1e-8));
    }
}

TEST_CASE("conservation report")
{
    const Lattice &lat = test_lattice();
    const std::vector<cplx> grid = reference_z_grid(lat, 4);
    IntegratorConfig cfg;
    cfg.samples = 41;

    const PhasePoint pp = seeded_phase_point(spec(3, 2, {2.0, 4.0}), 3);
    const Trajectory tr = integrate(pp, 10.0, lat, Variant::elliptic, cfg);
    REQUIRE_FALSE(tr.failed);
    const auto rep = conservation_report(tr, lat, Variant::elliptic, grid);
    CHECK(rep.worst() < 1e-7);
    CHECK(rep.char_poly_per_z.size() == grid.size());

    const Trajectory still = integrate(pp, 0.0, lat, Variant::elliptic, cfg);
    REQUIRE(still.states.size() == 1);
    const auto zero = conservation_report(still, lat, Variant::elliptic, grid);
    CHECK(zero.worst() == 0.0);

    OrbitSpec broken = spec(3, 1, {6.5});
    broken.diagonal_values = {2.0, 2.0, 2.5};
    const PhasePoint pb = seeded_phase_point(broken, 3);
    const Trajectory tb = integrate(pb, 10.0, lat, Variant::elliptic, cfg);
    REQUIRE_FALSE(tb.failed);
    const auto rb = conservation_report(tb, lat, Variant::elliptic, grid);
    MESSAGE("broken char_poly drift " << rb.char_poly);
    CHECK(rb.char_poly > 1e-3);
    CHECK(rb.hamiltonian < 1e-7);
}

TEST_CASE("flow reversal")
{
    IntegratorConfig cfg;
    cfg.samples = 2;
    for (Variant variant : {Variant::rational, Variant::elliptic}) {
        const Lattice lat = variant == Variant::rational ? Lattice::rational() : test_lattice();
        const PhasePoint pp = seeded_phase_point(spec(3, 2, {2.0, 4.0}), 4);
        const Trajectory fwd = integrate(pp, 3.0, lat, variant, cfg);
        REQUIRE_FALSE(fwd.failed);
        const Trajectory back = integrate(time_reversed(fwd.states.back()), 3.0, lat, variant, cfg);
        REQUIRE_FALSE(back.failed);
        const PhasePoint end = time_reversed(back.states.back());
        CHECK(rel(end.pack(), pp.pack()) < 1e-6);
    }
}

TEST_CASE("large periods approach the rational dynamics")
{
    const Lattice big = Lattice::elliptic(60.0, cplx(0, 60.0));
    const PhasePoint pp = seeded_phase_point(spec(3, 2, {2.0, 4.0}), 6);
    IntegratorConfig cfg;
    cfg.samples = 11;
    const Trajectory a = integrate(pp, 1.0, big, Variant::elliptic, cfg);
    const Trajectory b = integrate(pp, 1.0, Lattice::rational(), Variant::rational, cfg);
    REQUIRE_FALSE(a.failed);
    REQUIRE_FALSE(b.failed);
    double worst = 0;
    for (std::size_t k = 0; k < a.states.size(); ++k)
        worst = std::max(worst, (a.states[k].pack() - b.states[k].pack()).cwiseAbs().maxCoeff());
    CHECK(worst < 1e-4);
}

TEST_CASE("collisions end the trajectory with a failure flag")
{
    // real data with attractive coupling collapse at t = x0 / sqrt(16/x0^2) = 1/4 for x0 = 1, v0 = 0
    const PhasePoint pp = two_body(0.5, -0.5, 0.0, 0.0);
    IntegratorConfig cfg;
    cfg.samples = 11;
    const Trajectory tr = integrate(pp, 1.0, Lattice::rational(), Variant::rational, cfg);
    CHECK(tr.failed);
    CHECK(!tr.failure.empty());
    CHECK(tr.states.size() >= 3);
    CHECK(tr.times.back() <= 0.25);
}

TEST_CASE("trajectory csv")
{
    const PhasePoint pp = seeded_phase_point(spec(2, 1, {4.0}), 1);
    IntegratorConfig cfg;
    cfg.samples = 3;
    const Trajectory tr = integrate(pp, 0.5, Lattice::rational(), Variant::rational, cfg);
    std::ostringstream out;
    write_trajectory_csv(out, tr);
    std::istringstream in(out.str());
    std::string header, line;
    std::getline(in, header);
    CHECK(header == "t,x1_re,x1_im,x2_re,x2_im,p1_re,p1_im,p2_re,p2_im,f1_1_re,f1_1_im,f1_2_re,f1_2_im,"
                    "f2_1_re,f2_1_im,f2_2_re,f2_2_im");
    int rows = 0;
    while (std::getline(in, line)) {
        ++rows;
        CHECK(std::count(line.begin(), line.end(), ',') == 16);
    }
    CHECK(rows == 3);
    CHECK(PhasePoint::unpack(pp.pack(), 2).pack() == pp.pack());
}
