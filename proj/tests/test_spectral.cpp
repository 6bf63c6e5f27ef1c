#include <doctest.h>

#include "spincal/errors.hpp"
#include "spincal/spectral.hpp"
#include "support.hpp"

using namespace spincal;

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

std::vector<OrbitSpec> standard_specs() { return {spec(2, 1, {4.0}), spec(3, 1, {6.0}), spec(3, 2, {2.0, 4.0})}; }

} // namespace

TEST_CASE("two-body lax matrix")
{
    const Lattice &lat = test_lattice();
    const PhasePoint pp = seeded_phase_point(spec(2, 1, {4.0}), 2);
    const cplx x12 = pp.x(0) - pp.x(1);
    for (cplx z : {cplx(0.3, 0.4), cplx(-0.6, 0.1), cplx(0.2, -0.7)}) {
        const CMatrix L = lax(pp, z, lat);
        CHECK(std::abs(L(0, 0) - pp.p(0)) < 1e-14);
        CHECK(std::abs(L(1, 1) - pp.p(1)) < 1e-14);
        const cplx product = 4.0 * (wp(z, lat) - wp(x12, lat));
        CHECK(std::abs(L(0, 1) * L(1, 0) - product) < 1e-10 * std::abs(product));

        const auto r = char_poly(pp, z, lat);
        REQUIRE(r.size() == 3);
        CHECK(r[0] == cplx(1.0));
        CHECK(std::abs(r[1] - pp.p.sum()) < 1e-12);
        CHECK(std::abs(r[2] - (pp.p(0) * pp.p(1) - product)) < 1e-10 * std::abs(product));
    }
}

TEST_CASE("characteristic polynomial")
{
    const Lattice &lat = test_lattice();
    for (const auto &s : standard_specs()) {
        CAPTURE(s.N);
        CAPTURE(s.l);
        const PhasePoint pp = seeded_phase_point(s, 4);
        for (cplx z : {cplx(0.35, 0.25), cplx(-0.5, 0.45)}) {
            const CMatrix L = lax(pp, z, lat);
            const CMatrix G = lax_gauged(pp, z, lat);
            CHECK(std::abs(L.trace() - pp.p.sum()) < 1e-12);
            const auto r = char_poly(pp, z, lat);
            const auto direct = char_poly_coefficients(L);
            for (std::size_t j = 0; j < r.size(); ++j)
                CHECK(std::abs(r[j] - direct[j]) < 1e-10 * std::max(1.0, std::abs(direct[j])));

            // roots in 2k are minus the eigenvalues
            const auto roots = polynomial_roots(r);
            std::vector<cplx> neg;
            for (cplx e : eigenvalues(L))
                neg.push_back(-e);
            CHECK(multiset_distance(roots, neg) < 1e-9);
            for (cplx s2 : roots)
                CHECK(std::abs(curve_value(r, s2 / 2.0).first) < 1e-9);
            CHECK(multiset_distance(eigenvalues(G), eigenvalues(L)) < 1e-9);

            // every principal 2x2 minor is gauge invariant
            for (int i = 0; i < s.N; ++i)
                for (int j = i + 1; j < s.N; ++j)
                    CHECK(std::abs(L(i, j) * L(j, i) - G(i, j) * G(j, i)) < 1e-10 * std::max(1.0, std::abs(L(i, j) * L(j, i))));

            // dR/dk from the returned pair against a Cauchy derivative
            const cplx k = cplx(0.2, -0.1);
            const cplx dk = testing::cauchy_derivative([&](cplx t) { return curve_value(r, k + t).first; });
            CHECK(std::abs(curve_value(r, k).second - dk) < 1e-10 * std::max(1.0, std::abs(dk)));

            // elliptic in z
            for (cplx period : {2.0 * lat.omega1(), 2.0 * lat.omega2(), -2.0 * lat.omega1() + 2.0 * lat.omega2()}) {
                const auto shifted = char_poly(pp, z + period, lat);
                for (std::size_t j = 0; j < r.size(); ++j)
                    CHECK(std::abs(shifted[j] - r[j]) < 1e-9 * std::max(1.0, std::abs(r[j])));
            }
        }
    }
}

TEST_CASE("positions far outside the cell")
{
    // lax overflows, the gauged form does not, and the spectrum only depends on reduced data
    const Lattice &lat = test_lattice();
    PhasePoint pp = seeded_phase_point(spec(3, 2, {2.0, 4.0}), 4);
    const cplx z(0.3, 0.2);
    const auto near = char_poly(pp, z, lat);
    pp.x(1) += 2.0 * 300.0 * lat.omega2();
    pp.x(2) -= 2.0 * 250.0 * lat.omega1();
    CHECK_THROWS_AS(lax(pp, z, lat), OverflowError);
    const auto far = char_poly(pp, z, lat);
    for (std::size_t j = 0; j < near.size(); ++j)
        CHECK(std::abs(far[j] - near[j]) < 1e-8 * std::max(1.0, std::abs(near[j])));
}

TEST_CASE("genus")
{
    CHECK(genus(2, 1) == 2);
    CHECK(genus(3, 1) == 3);
    CHECK(genus(3, 2) == 4);
    CHECK(genus(4, 2) == 6);
    CHECK(genus(4, 3) == 7);
    CHECK_THROWS_AS(genus(3, 3), ConfigError);
    CHECK_THROWS_AS(genus(3, 0), ConfigError);
    for (int N = 2; N <= 6; ++N)
        for (int l = 1; l < N; ++l)
            CHECK(2 * genus(N, l) == 2 * N + orbit_dimension(N, l) - 2 * (N - 1));
}

TEST_CASE("cell zero search")
{
    const Lattice &lat = test_lattice();
    const cplx a(0.41, 0.27);
    const cplx wa = wp(a, lat);
    const auto F = [&](cplx z) { return wp(z, lat) - wa; };
    CHECK(pole_order_at_origin(F, lat) == 2);
    CHECK(pole_order_at_origin([&](cplx z) { return wp_prime(z, lat); }, lat) == 3);

    const auto found = find_cell_zeros(F, lat, -1);
    CHECK(found.complete());
    REQUIRE(found.zeros.size() == 2);
    std::vector<cplx> zs;
    for (const auto &cz : found.zeros)
        zs.push_back(cz.z);
    CHECK(multiset_distance(zs, {a, -a}) < 1e-12);

    // wp' vanishes at the three half periods
    const auto half = find_cell_zeros([&](cplx z) { return wp_prime(z, lat); }, lat, 3);
    CHECK(half.complete());
    for (const auto &cz : half.zeros) {
        const cplx twice = lat.reduce(2.0 * cz.z).z0;
        CHECK(std::abs(twice) < 1e-10);
    }

    // a double zero is reported once with multiplicity two
    const auto dbl = find_cell_zeros([&](cplx z) { return wp(z, lat) - wp(lat.omega1(), lat); }, lat, -1);
    CHECK(dbl.complete());
    REQUIRE(dbl.zeros.size() == 1);
    CHECK(dbl.zeros[0].multiplicity == 2);
}

TEST_CASE("branch points")
{
    const Lattice &lat = test_lattice();
    for (const auto &s : standard_specs()) {
        CAPTURE(s.N);
        CAPTURE(s.l);
        for (std::uint64_t seed : {2u, 3u}) {
            const PhasePoint pp = seeded_phase_point(s, seed);
            const auto bps = branch_points(pp, lat);
            int total = 0;
            for (const auto &bp : bps) {
                total += bp.multiplicity;
                const auto r = char_poly(pp, bp.z, lat);
                CHECK(bp.residual < 1e-9);
                CHECK(bp.dk_residual < 1e-9);
                CHECK(std::abs(curve_value(r, bp.k).first) < 1e-9);
                CHECK(std::abs(discriminant(pp, bp.z, lat)) < 1e-6);
            }
            CHECK(total == 2 * genus(s.N, s.l) - 2);
        }
    }

    // two particles: wp(z_b) = wp(x12) - (p1 - p2)^2 / 16, k_b = -(p1 + p2) / 4, at +-z_b
    const PhasePoint pp = seeded_phase_point(spec(2, 1, {4.0}), 5);
    const cplx e = wp(pp.x(0) - pp.x(1), lat) - (pp.p(0) - pp.p(1)) * (pp.p(0) - pp.p(1)) / 16.0;
    const auto bps = branch_points(pp, lat);
    REQUIRE(bps.size() == 2);
    for (const auto &bp : bps) {
        CHECK(std::abs(wp(bp.z, lat) - e) < 1e-9 * std::max(1.0, std::abs(e)));
        CHECK(std::abs(bp.k + pp.p.sum() / 4.0) < 1e-9);
    }
    CHECK(std::abs(lat.reduce(bps[0].z + bps[1].z).z0) < 1e-9);

    CHECK_THROWS_AS(branch_points(pp, Lattice::rational()), ConfigError);
}

TEST_CASE("behaviour near z = 0")
{
    const Lattice &lat = test_lattice();
    const std::vector<std::vector<cplx>> expected{{-1.0, 1.0}, {2.0, -1.0, -1.0}, {0.0, 1.0, -1.0}};
    const auto specs = standard_specs();
    for (std::size_t n = 0; n < specs.size(); ++n) {
        const auto &s = specs[n];
        CAPTURE(s.N);
        CAPTURE(s.l);
        const PhasePoint pp = seeded_phase_point(s, 3);
        const auto nu = z0_asymptotics(pp, lat);
        CHECK(multiset_distance(nu, expected[n]) < 1e-6);

        AsymptoticsConfig other;
        other.ray_angle = 2.1;
        CHECK(multiset_distance(z0_asymptotics(pp, lat, other), nu) < 1e-6);

        // nonzero eigenvalues of f come back as 2 nu + 2
        std::vector<cplx> lam;
        for (cplx v : nu)
            if (std::abs(2.0 * v + 2.0) > 1e-6)
                lam.push_back(2.0 * v + 2.0);
        CHECK(multiset_distance(lam, s.lambdas) < 1e-6);

        // z L~(z) -> -(f - 2I), Richardson in z
        const cplx z = std::polar(1e-3, 0.37);
        const CMatrix A1 = z * gauge_regularized_lax(pp, z, 0.0, lat);
        const CMatrix A2 = (z / 2.0) * gauge_regularized_lax(pp, z / 2.0, 0.0, lat);
        const CMatrix limit = 2.0 * A2 - A1;
        const CMatrix target = -(pp.f - 2.0 * CMatrix::Identity(s.N, s.N));
        CHECK(testing::max_abs(limit - target) < 1e-4);
    }
}

TEST_CASE("regularized lax matrix")
{
    const Lattice &lat = test_lattice();
    const PhasePoint pp = seeded_phase_point(spec(3, 2, {2.0, 4.0}), 2);
    for (cplx z : {cplx(0.3, 0.2), cplx(0.05, -0.04)}) {
        const CMatrix R0 = gauge_regularized_lax(pp, z, 0.0, lat);
        const CMatrix R1 = gauge_regularized_lax(pp, z, cplx(3.0, -2.0), lat);
        CHECK(testing::max_abs(R0 - R1) == 0.0);
        CHECK(multiset_distance(eigenvalues(R0), eigenvalues(lax_gauged(pp, z, lat))) < 1e-8 * std::max(1.0, R0.norm()));
    }
    const cplx z(0.3, 0.2);
    CHECK(multiset_distance(eigenvalues(gauge_regularized_lax(pp, z, 0.0, lat)), eigenvalues(lax(pp, z, lat))) < 1e-9);
}

TEST_CASE("independent integrals")
{
    const Lattice &lat = test_lattice();
    const std::vector<int> expected_rank{2, 3, 4};
    const auto specs = standard_specs();
    for (std::size_t n = 0; n < specs.size(); ++n) {
        const auto &s = specs[n];
        CAPTURE(s.N);
        CAPTURE(s.l);
        const PhasePoint pp = seeded_phase_point(s, 2);
        const auto audit = independent_integrals_rank(pp, lat, reference_z_grid(lat, 6));
        CHECK(audit.rank == expected_rank[n]);
        CHECK(audit.rank == genus(s.N, s.l));
        CHECK(audit.tangent_dimension == 2 * s.N + orbit_dimension(s) - (s.N - 1));
        CHECK_FALSE(audit.ill_conditioned);
        CHECK(audit.gap > 1e6);

        const auto resampled = independent_integrals_rank(pp, lat, reference_z_grid(lat, 9));
        CHECK(resampled.rank == audit.rank);
    }
}

TEST_CASE("reference grid")
{
    const Lattice &lat = test_lattice();
    const auto grid = reference_z_grid(lat, 12);
    CHECK(grid.size() == 12);
    for (cplx z : grid) {
        CHECK(lat.reduce(z).distance > 0.05);
        CHECK(std::abs(lat.reduce(z).z0 - z) < 1e-14);
    }
    CHECK(reference_z_grid(lat, 12) == grid);
}
