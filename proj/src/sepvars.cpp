#include "spincal/sepvars.hpp"

#include "spincal/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace spincal {

namespace {

double cell_scale(const Lattice &lat) { return lat.kind() == LatticeKind::rational ? 1.0 : std::abs(lat.omega1()); }

Section null_section(const CMatrix &M, double scale, const char *what)
{
    const Eigen::Index n = M.rows();
    Eigen::JacobiSVD<CMatrix> svd(M, Eigen::ComputeFullV);
    const auto &s = svd.singularValues();
    CVector v = svd.matrixV().col(n - 1);
    if (std::abs(v(0)) < 1e-10)
        throw NormalizationError(std::string(what) + ": first component vanishes");
    v /= v(0);
    Section out;
    out.residual = (M * v).norm() / scale;
    out.gap = n > 1 && s(0) > 0 ? s(n - 2) / s(0) : 1.0;
    out.values = std::move(v);
    return out;
}

CMatrix shifted_lax(const PhasePoint &pp, const Lattice &lat, cplx z, cplx k)
{
    const int n = pp.size();
    return lax(pp, z, lat) + 2.0 * k * CMatrix::Identity(n, n);
}

// R, dR/dk, M, dM/dk from the gauged matrix and its first minor.
std::array<cplx, 4> curve_and_minor(const PhasePoint &pp, const Lattice &lat, cplx z, cplx k)
{
    const CMatrix S = lax_gauged(pp, z, lat);
    const int n = int(S.rows());
    const auto [r, rk] = curve_value(char_poly_coefficients(S), k);
    const auto [m, mk] = curve_value(char_poly_coefficients(S.bottomRightCorner(n - 1, n - 1)), k);
    return {r, rk, m, mk};
}

// Newton on (R, M) in (z, k) with z-derivatives by central differences. Returns the best iterate.
DivisorPoint solve_divisor(const PhasePoint &pp, const Lattice &lat, cplx z, cplx k, int max_iter = 40)
{
    const double h = 1e-6 * cell_scale(lat);
    DivisorPoint best{z, k, 0, std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    for (int it = 0; it < max_iter; ++it) {
        const auto c = curve_and_minor(pp, lat, z, k);
        const double res = std::abs(c[0]) + std::abs(c[2]);
        if (res < best.residual + best.curve_residual)
            best = {z, k, 0, std::abs(c[2]), std::abs(c[0])};
        const auto cp = curve_and_minor(pp, lat, z + h, k), cm = curve_and_minor(pp, lat, z - h, k);
        const cplx rz = (cp[0] - cm[0]) / (2 * h), mz = (cp[2] - cm[2]) / (2 * h);
        // [[R_k, R_z], [M_k, M_z]] (dk, dz) = -(R, M)
        const cplx det = c[1] * mz - rz * c[3];
        if (det == 0.0)
            break;
        const cplx dk = (-c[0] * mz + rz * c[2]) / det;
        const cplx dz = (-c[1] * c[2] + c[3] * c[0]) / det;
        z += dz;
        k += dk;
        if (std::abs(dz) < 1e-15 * cell_scale(lat) && std::abs(dk) < 1e-15 * (1 + std::abs(k))) {
            const auto f = curve_and_minor(pp, lat, z, k);
            if (std::abs(f[0]) + std::abs(f[2]) < best.residual + best.curve_residual)
                best = {z, k, 0, std::abs(f[2]), std::abs(f[0])};
            break;
        }
    }
    return best;
}

int sheet_of(const PhasePoint &pp, const Lattice &lat, cplx z, cplx k)
{
    const auto ks = sheets(pp, lat, z);
    int best = 0;
    for (int a = 1; a < int(ks.size()); ++a)
        if (std::abs(ks[a] - k) < std::abs(ks[best] - k))
            best = a;
    return best;
}

// Polynomial through (s_i, y_i) evaluated at s = 0 (Neville).
template <class T>
T extrapolate_to_zero(const std::vector<double> &s, std::vector<T> y)
{
    const std::size_t n = s.size();
    for (std::size_t m = 1; m < n; ++m)
        for (std::size_t i = 0; i + m < n; ++i)
            y[i] = (s[i + m] * y[i] - s[i] * y[i + 1]) / (s[i + m] - s[i]);
    return y[0];
}

cplx directional(const PhaseGradient &g, const PhaseTangent &u, const SpinMatrix &f)
{
    const CMatrix U = f * u.X - u.X * f;
    return (g.dx.array() * u.dx.array()).sum() + (g.dp.array() * u.dp.array()).sum() + (g.df.array() * U.array()).sum();
}

} // namespace

Section eigenvector(const PhasePoint &pp, const Lattice &lat, cplx z, cplx k)
{
    const CMatrix M = shifted_lax(pp, lat, z, k);
    return null_section(M, std::max(1.0, lax(pp, z, lat).norm()), "eigenvector");
}

Section adjoint_eigenvector(const PhasePoint &pp, const Lattice &lat, cplx z, cplx k)
{
    const CMatrix M = shifted_lax(pp, lat, z, k);
    return null_section(M.transpose(), std::max(1.0, lax(pp, z, lat).norm()), "adjoint_eigenvector");
}

cplx pairing(const CVector &adjoint, const CVector &vec) { return (adjoint.array() * vec.array()).sum(); }

std::vector<cplx> sheets(const PhasePoint &pp, const Lattice &lat, cplx z)
{
    auto roots = polynomial_roots(char_poly(pp, z, lat));
    for (cplx &r : roots)
        r /= 2.0;
    std::sort(roots.begin(), roots.end(),
              [](cplx a, cplx b) { return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag(); });
    return roots;
}

cplx first_minor(const PhasePoint &pp, const Lattice &lat, cplx z, cplx k) { return curve_and_minor(pp, lat, z, k)[2]; }

PairingLimit pairing_zero_check(const PhasePoint &pp, const Lattice &lat, const BranchPoint &bp, double start,
                                int levels)
{
    if (levels < 3)
        throw ConfigError("pairing_zero_check: need at least 3 levels");
    const cplx dir = std::polar(1.0, 0.61);
    PairingLimit out;
    std::vector<double> s, rs;
    std::vector<cplx> values;
    std::vector<CVector> diffs;
    CVector reference;
    cplx prev_k = bp.k;
    for (int n = 0; n < levels; ++n) {
        const double r = start * std::pow(0.5, n);
        const cplx z = bp.z + r * dir;
        auto ks = sheets(pp, lat, z);
        std::sort(ks.begin(), ks.end(), [&](cplx a, cplx b) { return std::abs(a - bp.k) < std::abs(b - bp.k); });
        cplx k = ks[0], other = ks[1];
        if (n > 0) {
            const cplx predicted = bp.k + (prev_k - bp.k) / std::sqrt(2.0);
            if (std::abs(ks[1] - predicted) < std::abs(ks[0] - predicted))
                std::swap(k, other);
        }
        prev_k = k;
        const Section c = eigenvector(pp, lat, z, k), c2 = eigenvector(pp, lat, z, other);
        const Section a = adjoint_eigenvector(pp, lat, z, k), a2 = adjoint_eigenvector(pp, lat, z, other);
        const cplx here = pairing(a.values, c.values), there = pairing(a2.values, c2.values);
        out.radii.push_back(r);
        out.samples.push_back(std::abs(here));
        s.push_back(std::sqrt(r));
        rs.push_back(r);
        // the sheet average is analytic in r, the sheet difference is odd in sqrt(r)
        values.push_back(0.5 * (here + there));
        diffs.push_back(c.values - c2.values);
        reference = c.values;
    }
    const cplx full = extrapolate_to_zero(rs, values);
    const std::vector<double> r_short(rs.begin(), rs.end() - 1);
    const std::vector<cplx> v_short(values.begin(), values.end() - 1);
    out.pairing = std::abs(full);
    out.spread = std::abs(full - extrapolate_to_zero(r_short, v_short));
    out.angle = extrapolate_to_zero(s, diffs).norm() / reference.norm();
    return out;
}

DivisorPoint polish_divisor_point(const PhasePoint &pp, const Lattice &lat, cplx z, cplx k)
{
    DivisorPoint d = solve_divisor(pp, lat, z, k);
    d.z = lat.reduce(d.z).z0;
    d.sheet = sheet_of(pp, lat, d.z, d.k);
    return d;
}

namespace {

// Which section loses its first component at a common zero of R and the minor: compare unit null vectors of M and M^T.
bool loses_first_component(const PhasePoint &pp, const Lattice &lat, const DivisorPoint &d)
{
    const int n = pp.size();
    const CMatrix M = lax_gauged(pp, d.z, lat) + 2.0 * d.k * CMatrix::Identity(n, n);
    Eigen::JacobiSVD<CMatrix> right(M, Eigen::ComputeFullV), left(CMatrix(M.transpose()), Eigen::ComputeFullV);
    return std::abs(right.matrixV()(0, n - 1)) <= std::abs(left.matrixV()(0, n - 1));
}

} // namespace

DivisorSearch divisor(const PhasePoint &pp, const Lattice &lat, const CellSearchConfig &cfg)
{
    if (lat.kind() != LatticeKind::elliptic)
        throw ConfigError("divisor requires an elliptic lattice");
    const int n = pp.size();
    DivisorSearch out;
    out.expected = genus(n, numerical_rank(pp.f)) - 1;

    // resultant in k of R and the first minor: prod_a R(-mu'_a / 2, z)
    auto resultant = [&](cplx z) {
        const CMatrix S = lax_gauged(pp, z, lat);
        const auto coeffs = char_poly_coefficients(S);
        cplx acc = 1;
        for (cplx mu : eigenvalues(CMatrix(S.bottomRightCorner(n - 1, n - 1))))
            acc *= curve_value(coeffs, -mu / 2.0).first;
        return acc;
    };
    const auto search = find_cell_zeros(resultant, lat, -1, cfg);

    for (const auto &zero : search.zeros) {
        const CMatrix S = lax_gauged(pp, zero.z, lat);
        const auto coeffs = char_poly_coefficients(S);
        cplx k = 0;
        double best = std::numeric_limits<double>::infinity();
        for (cplx mu : eigenvalues(CMatrix(S.bottomRightCorner(n - 1, n - 1)))) {
            const double r = std::abs(curve_value(coeffs, -mu / 2.0).first);
            if (r < best) {
                best = r;
                k = -mu / 2.0;
            }
        }
        const DivisorPoint d = polish_divisor_point(pp, lat, zero.z, k);

        for (int m = 0; m < zero.multiplicity; ++m)
            (loses_first_component(pp, lat, d) ? out.points : out.adjoint_points).push_back(d);
    }
    return out;
}

std::vector<DivisorPoint> track_divisor(const PhasePoint &pp, const Lattice &lat, const std::vector<DivisorPoint> &base,
                                        double margin)
{
    double separation = cell_scale(lat);
    for (std::size_t i = 0; i < base.size(); ++i)
        for (std::size_t j = i + 1; j < base.size(); ++j)
            separation = std::min(separation, std::hypot(std::abs(base[i].z - base[j].z), std::abs(base[i].k - base[j].k)));
    std::vector<DivisorPoint> out;
    for (const auto &b : base) {
        DivisorPoint d = solve_divisor(pp, lat, b.z, b.k);
        const double moved = std::hypot(std::abs(d.z - b.z), std::abs(d.k - b.k));
        if (moved > margin * separation)
            throw TrackingError("track_divisor: point moved " + std::to_string(moved) + ", separation " +
                                std::to_string(separation));
        if (d.residual > 1e-8 || d.curve_residual > 1e-8)
            throw TrackingError("track_divisor: Newton did not converge");
        if (!loses_first_component(pp, lat, d))
            throw TrackingError("track_divisor: point switched to the adjoint divisor");
        d.sheet = b.sheet;
        out.push_back(d);
    }
    return out;
}

DivisorGradients divisor_gradients(const PhasePoint &pp, const Lattice &lat, double fd_step,
                                   const CellSearchConfig &cfg)
{
    const DivisorSearch found = divisor(pp, lat, cfg);
    if (!found.complete())
        throw ConvergenceError("divisor_gradients: found " + std::to_string(found.points.size()) + " of " +
                               std::to_string(found.expected) + " divisor points");
    const int n = pp.size();
    const int count = int(found.points.size());
    DivisorGradients g;
    g.base = found.points;
    for (int i = 0; i < count; ++i) {
        g.z.push_back({CVector(n), CVector(n), CMatrix(n, n)});
        g.k.push_back({CVector(n), CVector(n), CMatrix(n, n)});
    }
    const CVector y0 = pp.pack();
    auto central = [&](int c, double h) {
        CVector yp = y0, ym = y0;
        yp(c) += h;
        ym(c) -= h;
        const auto up = track_divisor(PhasePoint::unpack(yp, n), lat, g.base);
        const auto dn = track_divisor(PhasePoint::unpack(ym, n), lat, g.base);
        std::vector<std::pair<cplx, cplx>> d;
        for (int i = 0; i < count; ++i)
            d.push_back({(up[i].z - dn[i].z) / (2 * h), (up[i].k - dn[i].k) / (2 * h)});
        return d;
    };
    auto slot = [n](PhaseGradient &pg, int c) -> cplx & {
        if (c < n)
            return pg.dx(c);
        if (c < 2 * n)
            return pg.dp(c - n);
        const int e = c - 2 * n;
        return pg.df(e % n, e / n);
    };
    for (int c = 0; c < int(y0.size()); ++c) {
        const auto coarse = central(c, fd_step), fine = central(c, fd_step / 2);
        for (int i = 0; i < count; ++i) {
            slot(g.z[i], c) = (4.0 * fine[i].first - coarse[i].first) / 3.0;
            slot(g.k[i], c) = (4.0 * fine[i].second - coarse[i].second) / 3.0;
        }
    }
    return g;
}

double BracketMatrix::max_zz() const { return ZZ.size() ? ZZ.cwiseAbs().maxCoeff() : 0.0; }
double BracketMatrix::max_kk() const { return KK.size() ? KK.cwiseAbs().maxCoeff() : 0.0; }

double BracketMatrix::max_kz_offdiagonal() const
{
    double m = 0;
    for (Eigen::Index i = 0; i < KZ.rows(); ++i)
        for (Eigen::Index j = 0; j < KZ.cols(); ++j)
            if (i != j)
                m = std::max(m, std::abs(KZ(i, j)));
    return m;
}

cplx BracketMatrix::kz_mean() const { return KZ.size() ? KZ.diagonal().mean() : cplx(0); }

double BracketMatrix::kz_diagonal_spread() const
{
    const cplx mean = kz_mean();
    double m = 0;
    for (Eigen::Index i = 0; i < KZ.rows(); ++i)
        m = std::max(m, std::abs(KZ(i, i) - mean));
    return mean == 0.0 ? m : m / std::abs(mean);
}

BracketMatrix bracket_matrix(const DivisorGradients &grads, const SpinMatrix &f)
{
    const int m = int(grads.z.size());
    BracketMatrix b{CMatrix(m, m), CMatrix(m, m), CMatrix(m, m)};
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) {
            b.ZZ(i, j) = phase_bracket(grads.z[i], grads.z[j], f);
            b.KK(i, j) = phase_bracket(grads.k[i], grads.k[j], f);
            b.KZ(i, j) = phase_bracket(grads.k[i], grads.z[j], f);
        }
    return b;
}

BracketMatrix darboux_check(const PhasePoint &pp, const Lattice &lat, double fd_step, const CellSearchConfig &cfg)
{
    return bracket_matrix(divisor_gradients(pp, lat, fd_step, cfg), pp.f);
}

PhaseTangent random_reduced_tangent(const PhasePoint &pp, CounterRng &rng)
{
    const int n = pp.size();
    PhaseTangent t{CVector(n), CVector(n), CMatrix(n, n)};
    for (int i = 0; i < n; ++i) {
        t.dx(i) = rng.complex_normal();
        t.dp(i) = rng.complex_normal();
    }
    t.dx.array() -= t.dx.mean();
    t.dp.array() -= t.dp.mean();
    const CMatrix gens = constrained_generators(pp.f);
    CVector coeff(gens.cols());
    for (Eigen::Index c = 0; c < coeff.size(); ++c)
        coeff(c) = rng.complex_normal();
    const CVector vecX = gens * coeff;
    t.X = Eigen::Map<const CMatrix>(vecX.data(), n, n);
    return t;
}

ReducedFormFit reduced_form_fit(const DivisorGradients &grads, const PhasePoint &pp, int trials, std::uint64_t seed)
{
    CounterRng rng(seed, 0x5e9);
    std::vector<cplx> can, alg;
    ReducedFormFit out;
    out.trials = trials;
    auto algebraic = [&](const PhaseTangent &u, const PhaseTangent &v) {
        cplx acc = 0;
        for (std::size_t i = 0; i < grads.z.size(); ++i)
            acc += directional(grads.k[i], u, pp.f) * directional(grads.z[i], v, pp.f) -
                   directional(grads.k[i], v, pp.f) * directional(grads.z[i], u, pp.f);
        return acc;
    };
    for (int t = 0; t < trials; ++t) {
        const PhaseTangent u = random_reduced_tangent(pp, rng), v = random_reduced_tangent(pp, rng);
        const cplx wc = symplectic_form(pp.f, u, v), wa = algebraic(u, v);
        out.antisymmetry = std::max({out.antisymmetry, std::abs(wc + symplectic_form(pp.f, v, u)),
                                     std::abs(wa + algebraic(v, u))});
        can.push_back(wc);
        alg.push_back(wa);
    }
    cplx num = 0;
    double den = 0, norm = 0;
    for (int t = 0; t < trials; ++t) {
        num += std::conj(alg[t]) * can[t];
        den += std::norm(alg[t]);
        norm += std::norm(can[t]);
    }
    out.c_hat = den > 0 ? num / den : cplx(0);
    double res = 0;
    for (int t = 0; t < trials; ++t)
        res += std::norm(can[t] - out.c_hat * alg[t]);
    out.residual = norm > 0 ? std::sqrt(res / norm) : 0.0;
    return out;
}

ReducedFormFit reduced_form_check(const PhasePoint &pp, const Lattice &lat, int trials, std::uint64_t seed,
                                  double fd_step)
{
    return reduced_form_fit(divisor_gradients(pp, lat, fd_step), pp, trials, seed);
}

} // namespace spincal
