#include "spincal/spectral.hpp"

#include "spincal/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

namespace spincal {

namespace {

std::pair<double, double> cell_coordinates(const Lattice &lat, cplx z)
{
    const cplx a = 2.0 * lat.omega1(), b = 2.0 * lat.omega2();
    const double det = a.real() * b.imag() - a.imag() * b.real();
    return {(z.real() * b.imag() - z.imag() * b.real()) / det, (a.real() * z.imag() - a.imag() * z.real()) / det};
}

cplx from_cell(const Lattice &lat, double s, double t) { return 2.0 * lat.omega1() * s + 2.0 * lat.omega2() * t; }

void require_elliptic(const Lattice &lat, const char *what)
{
    if (lat.kind() != LatticeKind::elliptic)
        throw ConfigError(std::string(what) + " requires an elliptic lattice");
}

double cell_scale(const Lattice &lat)
{
    if (lat.kind() == LatticeKind::rational)
        return 1.0;
    return std::abs(lat.omega1());
}

// Derivative coefficients of sum_j c_j s^{N-j}.
std::vector<cplx> derivative(const std::vector<cplx> &c)
{
    const std::size_t n = c.size() - 1;
    std::vector<cplx> d;
    for (std::size_t j = 0; j < n; ++j)
        d.push_back(c[j] * double(n - j));
    if (d.empty())
        d.push_back(0.0);
    return d;
}

cplx reduced_position(const Lattice &lat, cplx x)
{
    return lat.kind() == LatticeKind::rational ? x : lat.reduce(x).z0;
}

} // namespace

CMatrix lax(const PhasePoint &pp, cplx z, const Lattice &lat)
{
    const int n = pp.size();
    CMatrix L(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            L(i, j) = i == j ? pp.p(i) : pp.f(i, j) * phi(pp.x(i) - pp.x(j), z, lat);
    return L;
}

CMatrix lax_gauged(const PhasePoint &pp, cplx z, const Lattice &lat)
{
    const int n = pp.size();
    const cplx z0 = reduced_position(lat, z);
    std::vector<cplx> x(n);
    for (int i = 0; i < n; ++i)
        x[i] = reduced_position(lat, pp.x(i));
    CMatrix S(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            S(i, j) = i == j ? pp.p(i) : pp.f(i, j) * phi_gauged(x[i] - x[j], z0, lat);
    return S;
}

CMatrix gauge_regularized_lax(const PhasePoint &pp, cplx z, cplx x0, const Lattice &lat)
{
    (void)x0; // cancels entrywise
    const int n = pp.size();
    CMatrix L(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            L(i, j) = i == j ? pp.p(i) : pp.f(i, j) * phi_scaled(pp.x(i) - pp.x(j), z, lat);
    return L;
}

std::vector<cplx> char_poly(const PhasePoint &pp, cplx z, const Lattice &lat)
{
    return char_poly_coefficients(lax_gauged(pp, z, lat));
}

std::pair<cplx, cplx> curve_value(const std::vector<cplx> &coeffs, cplx k)
{
    const auto [v, d] = eval_poly(coeffs, 2.0 * k);
    return {v, 2.0 * d};
}

int genus(int N, int l)
{
    if (l < 1 || l > N - 1)
        throw ConfigError("genus: requires 1 <= l <= N-1");
    return N * l - l * (l + 1) / 2 + 1;
}

std::vector<cplx> reference_z_grid(const Lattice &lat, int count)
{
    std::vector<cplx> grid;
    const double phi1 = 0.6180339887498949, phi2 = 0.4142135623730951;
    for (int m = 1; grid.size() < std::size_t(count); ++m) {
        const double s = std::fmod(0.5 + m * phi1, 1.0) - 0.5;
        const double t = std::fmod(0.5 + m * phi2, 1.0) - 0.5;
        if (std::max(std::abs(s), std::abs(t)) < 0.12)
            continue;
        switch (lat.kind()) {
        case LatticeKind::elliptic:
            grid.push_back(from_cell(lat, 0.8 * s, 0.8 * t));
            break;
        case LatticeKind::trigonometric:
            grid.push_back(2.0 * lat.omega1() * (0.8 * s) + cplx(0, 1.6 * t) * std::abs(lat.omega1()));
            break;
        case LatticeKind::rational:
            grid.push_back(cplx(1.6 * s, 1.6 * t));
            break;
        }
    }
    return grid;
}

SpectralCurve sample_curve(const PhasePoint &pp, const Lattice &lat, const std::vector<cplx> &z_grid)
{
    SpectralCurve c;
    c.N = pp.size();
    c.l = numerical_rank(pp.f);
    c.g = genus(c.N, c.l);
    c.z_grid = z_grid;
    for (cplx z : z_grid)
        c.coeff_samples.push_back(char_poly(pp, z, lat));
    return c;
}

int pole_order_at_origin(const std::function<cplx(cplx)> &F, const Lattice &lat, double r)
{
    double rho = r * cell_scale(lat);
    if (lat.kind() == LatticeKind::elliptic)
        rho = r * std::min(std::abs(2.0 * lat.omega1()), std::abs(2.0 * lat.omega2()));
    for (int points = 256; points <= 1 << 16; points *= 2) {
        double total = 0;
        bool smooth = true;
        cplx prev = F(cplx(rho, 0));
        for (int k = 1; k <= points; ++k) {
            const cplx cur = F(std::polar(rho, 2 * std::numbers::pi * k / points));
            const double d = std::arg(cur / prev);
            if (std::abs(d) > 0.5)
                smooth = false;
            total += d;
            prev = cur;
        }
        if (smooth)
            return -int(std::lround(total / (2 * std::numbers::pi)));
    }
    throw ConvergenceError("pole_order_at_origin: winding number did not resolve");
}

namespace {

int local_multiplicity(const std::function<cplx(cplx)> &F, cplx z, double rho)
{
    for (int points = 64; points <= 4096; points *= 2) {
        double total = 0;
        bool smooth = true;
        cplx prev = F(z + rho);
        for (int k = 1; k <= points; ++k) {
            const cplx cur = F(z + std::polar(rho, 2 * std::numbers::pi * k / points));
            const double d = std::arg(cur / prev);
            if (std::abs(d) > 0.5)
                smooth = false;
            total += d;
            prev = cur;
        }
        if (smooth)
            return int(std::lround(total / (2 * std::numbers::pi)));
    }
    return 1;
}

} // namespace

CellZeroSearch find_cell_zeros(const std::function<cplx(cplx)> &F, const Lattice &lat, int expected,
                               const CellSearchConfig &cfg)
{
    require_elliptic(lat, "find_cell_zeros");
    CellZeroSearch out;
    out.expected = expected >= 0 ? expected : pole_order_at_origin(F, lat);
    const double scale = std::abs(2.0 * lat.omega1());

    auto safe = [&](cplx z) -> cplx {
        try {
            return F(z);
        } catch (const Error &) {
            return std::numeric_limits<double>::infinity();
        }
    };

    auto newton = [&](cplx z, cplx &root) {
        const double h = 1e-7 * scale;
        double last = std::numeric_limits<double>::infinity();
        for (int it = 0; it < cfg.max_newton; ++it) {
            const cplx v = safe(z);
            if (v == 0.0) {
                root = z;
                return true;
            }
            const cplx d = (safe(z + h) - safe(z - h)) / (2 * h);
            const cplx step = v / d;
            if (!std::isfinite(std::abs(step)) || std::abs(step) > 0.3 * scale)
                return false;
            z -= step;
            last = std::abs(step);
            if (last < cfg.newton_tol * scale)
                break;
        }
        root = z;
        return last < 1e-8 * scale;
    };

    std::vector<cplx> roots;
    auto add_root = [&](cplx z) {
        const auto r = lat.reduce(z);
        if (r.distance < cfg.exclusion)
            return;
        for (cplx q : roots)
            if (lat.reduce(q - r.z0).distance < 1e-7)
                return;
        roots.push_back(r.z0);
    };

    int n = cfg.grid;
    for (int level = 0; level <= cfg.max_refinements; ++level, n *= 2) {
        out.refinements = level;
        std::vector<double> val(std::size_t(n) * n);
        auto at = [&](int i, int j) -> double & { return val[std::size_t(((i % n) + n) % n) * n + ((j % n) + n) % n]; };
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                const double s = -0.5 + (i + 0.5) / n, t = -0.5 + (j + 0.5) / n;
                const cplx z = from_cell(lat, s, t);
                at(i, j) = lat.reduce(z).distance < cfg.exclusion ? std::numeric_limits<double>::infinity()
                                                                   : std::abs(safe(z));
            }
        std::vector<std::pair<double, cplx>> seeds;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                const double v = at(i, j);
                bool minimum = std::isfinite(v);
                for (int di = -1; di <= 1 && minimum; ++di)
                    for (int dj = -1; dj <= 1; ++dj)
                        if ((di || dj) && at(i + di, j + dj) < v) {
                            minimum = false;
                            break;
                        }
                if (minimum)
                    seeds.push_back({v, from_cell(lat, -0.5 + (i + 0.5) / n, -0.5 + (j + 0.5) / n)});
            }
        if (level == cfg.max_refinements) {
            std::vector<std::pair<double, cplx>> all;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j)
                    all.push_back({at(i, j), from_cell(lat, -0.5 + (i + 0.5) / n, -0.5 + (j + 0.5) / n)});
            std::sort(all.begin(), all.end(), [](const auto &a, const auto &b) { return a.first < b.first; });
            all.resize(std::min<std::size_t>(all.size(), 8 * std::max(out.expected, 1)));
            seeds.insert(seeds.end(), all.begin(), all.end());
        }
        std::sort(seeds.begin(), seeds.end(), [](const auto &a, const auto &b) { return a.first < b.first; });
        for (const auto &seed : seeds) {
            cplx root;
            if (newton(seed.second, root))
                add_root(root);
        }

        out.zeros.clear();
        out.found = 0;
        for (std::size_t a = 0; a < roots.size(); ++a) {
            double sep = 0.01 * scale;
            for (std::size_t b = 0; b < roots.size(); ++b)
                if (b != a)
                    sep = std::min(sep, 0.3 * std::abs(lat.reduce(roots[a] - roots[b]).z0));
            const int mult = local_multiplicity(safe, roots[a], sep);
            out.zeros.push_back({roots[a], std::max(mult, 1)});
            out.found += std::max(mult, 1);
        }
        if (out.found >= out.expected)
            break;
    }
    std::sort(out.zeros.begin(), out.zeros.end(), [&](const CellZero &a, const CellZero &b) {
        const auto ca = cell_coordinates(lat, a.z), cb = cell_coordinates(lat, b.z);
        if (std::abs(ca.first - cb.first) > 1e-9)
            return ca.first < cb.first;
        return ca.second < cb.second;
    });
    return out;
}

cplx discriminant(const PhasePoint &pp, cplx z, const Lattice &lat)
{
    const auto mu = eigenvalues(lax_gauged(pp, z, lat));
    cplx d = 1;
    for (std::size_t a = 0; a < mu.size(); ++a)
        for (std::size_t b = a + 1; b < mu.size(); ++b)
            d *= (mu[a] - mu[b]) * (mu[a] - mu[b]);
    return d;
}

BranchPoint polish_branch_point(const PhasePoint &pp, const Lattice &lat, cplx z, cplx k)
{
    const double h = 1e-6 * cell_scale(lat);
    auto eval = [&](cplx zz, cplx kk) {
        const auto c = char_poly(pp, zz, lat);
        const auto dc = derivative(c);
        const auto [r, rk] = curve_value(c, kk);
        const auto [rk2, rkk] = curve_value(dc, kk);
        (void)rk2;
        return std::array<cplx, 3>{r, rk, 2.0 * rkk}; // R, dR/dk, d2R/dk2
    };
    BranchPoint best{z, k, 1, std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    for (int it = 0; it < 40; ++it) {
        const auto c0 = eval(z, k);
        const auto cp = eval(z + h, k), cm = eval(z - h, k);
        const cplx rz = (cp[0] - cm[0]) / (2 * h);
        const cplx rkz = (cp[1] - cm[1]) / (2 * h);
        const double res = std::abs(c0[0]), dres = std::abs(c0[1]);
        if (res + dres < best.residual + best.dk_residual)
            best = {z, k, 1, res, dres};
        // [[R_k, R_z], [R_kk, R_kz]] (dk, dz) = -(R, R_k)
        const cplx det = c0[1] * rkz - rz * c0[2];
        if (det == 0.0)
            break;
        const cplx dk = (-c0[0] * rkz + rz * c0[1]) / det;
        const cplx dz = (-c0[1] * c0[1] + c0[2] * c0[0]) / det;
        z += dz;
        k += dk;
        if (std::abs(dz) < 1e-15 * cell_scale(lat) && std::abs(dk) < 1e-15 * (1 + std::abs(k)))
            break;
    }
    const auto c = eval(best.z, best.k);
    best.residual = std::abs(c[0]);
    best.dk_residual = std::abs(c[1]);
    if (lat.kind() != LatticeKind::rational)
        best.z = lat.reduce(best.z).z0;
    return best;
}

std::vector<BranchPoint> branch_points(const PhasePoint &pp, const Lattice &lat, const CellSearchConfig &cfg)
{
    require_elliptic(lat, "branch_points");
    const int l = numerical_rank(pp.f);
    const int expected = 2 * genus(pp.size(), l) - 2;
    const auto search = find_cell_zeros([&](cplx z) { return discriminant(pp, z, lat); }, lat, expected, cfg);
    if (!search.complete())
        throw ConvergenceError("branch_points: found " + std::to_string(search.found) + " of " +
                               std::to_string(expected) + " branch points");
    std::vector<BranchPoint> out;
    for (const auto &zero : search.zeros) {
        const auto mu = eigenvalues(lax_gauged(pp, zero.z, lat));
        std::size_t ba = 0, bb = 1;
        for (std::size_t a = 0; a < mu.size(); ++a)
            for (std::size_t b = a + 1; b < mu.size(); ++b)
                if (std::abs(mu[a] - mu[b]) < std::abs(mu[ba] - mu[bb])) {
                    ba = a;
                    bb = b;
                }
        BranchPoint bp = zero.multiplicity == 1 ? polish_branch_point(pp, lat, zero.z, -(mu[ba] + mu[bb]) / 4.0)
                                                : BranchPoint{zero.z, -(mu[ba] + mu[bb]) / 4.0};
        bp.multiplicity = zero.multiplicity;
        if (zero.multiplicity != 1) {
            const auto [r, rk] = curve_value(char_poly(pp, bp.z, lat), bp.k);
            bp.residual = std::abs(r);
            bp.dk_residual = std::abs(rk);
        }
        out.push_back(bp);
    }
    return out;
}

std::vector<cplx> z0_asymptotics(const PhasePoint &pp, const Lattice &lat, const AsymptoticsConfig &cfg)
{
    const int n = pp.size();
    const cplx dir = std::polar(1.0, cfg.ray_angle);
    std::vector<std::vector<cplx>> table; // table[level][alpha], matched across levels
    std::vector<std::vector<std::vector<cplx>>> rich;
    for (int level = 0; level < cfg.levels; ++level) {
        const cplx z = cfg.start_radius * std::pow(0.5, level) * dir;
        const CMatrix m = z * gauge_regularized_lax(pp, z, pp.x(0), lat);
        std::vector<cplx> w = eigenvalues(m);
        if (!table.empty()) {
            std::vector<cplx> pred = table.back();
            if (table.size() >= 2)
                for (int a = 0; a < n; ++a)
                    pred[a] = 1.5 * table.back()[a] - 0.5 * table[table.size() - 2][a];
            const auto perm = best_assignment(pred, w);
            std::vector<cplx> sorted(n);
            for (int a = 0; a < n; ++a)
                sorted[a] = w[perm[a]];
            w = sorted;
        }
        table.push_back(w);
    }
    // Richardson in z with ratio 1/2 and integer error powers.
    const int L = int(table.size());
    std::vector<std::vector<cplx>> prev = table, cur;
    std::vector<cplx> best(n), last_diag(n);
    double best_change = std::numeric_limits<double>::infinity();
    std::vector<cplx> diag_prev = table[0];
    for (int m = 1; m < L; ++m) {
        cur.assign(L - m, std::vector<cplx>(n));
        const double f = std::pow(2.0, m);
        for (int i = 0; i < L - m; ++i)
            for (int a = 0; a < n; ++a)
                cur[i][a] = (f * prev[i + 1][a] - prev[i][a]) / (f - 1);
        const std::vector<cplx> &diag = cur.back();
        double change = 0;
        for (int a = 0; a < n; ++a)
            change = std::max(change, std::abs(diag[a] - diag_prev[a]) / std::max(1.0, std::abs(diag[a])));
        if (change < best_change) {
            best_change = change;
            best = diag;
        }
        diag_prev = diag;
        prev = cur;
    }
    if (!(best_change < cfg.stabilization_tol))
        throw ConvergenceError("z0_asymptotics: extrapolation did not stabilize");
    std::vector<cplx> out(n);
    for (int a = 0; a < n; ++a)
        out[a] = -0.5 * best[a];
    return out;
}

CMatrix constrained_tangent_basis(const PhasePoint &pp)
{
    const int n = pp.size();
    const CMatrix gens = constrained_generators(pp.f);
    const int dim = 2 * n + n * n;
    CMatrix basis = CMatrix::Zero(dim, 2 * n + gens.cols());
    for (int i = 0; i < 2 * n; ++i)
        basis(i, i) = 1;
    for (Eigen::Index c = 0; c < gens.cols(); ++c) {
        const CMatrix X = Eigen::Map<const CMatrix>(gens.col(c).data(), n, n);
        const CMatrix U = pp.f * X - X * pp.f;
        basis.block(2 * n, 2 * n + c, n * n, 1) = Eigen::Map<const CVector>(U.data(), n * n);
    }
    return basis;
}

RankAudit independent_integrals_rank(const PhasePoint &pp, const Lattice &lat, const std::vector<cplx> &z_grid,
                                     double step)
{
    const int n = pp.size();
    const CMatrix basis = constrained_tangent_basis(pp);
    const CVector y0 = pp.pack();
    auto sample = [&](const CVector &y) {
        const PhasePoint q = PhasePoint::unpack(y, n);
        CVector out(n * z_grid.size());
        for (std::size_t m = 0; m < z_grid.size(); ++m) {
            const auto r = char_poly(q, z_grid[m], lat);
            for (int j = 1; j <= n; ++j)
                out(m * n + j - 1) = r[j];
        }
        return out;
    };
    CMatrix J(n * z_grid.size(), basis.cols());
    for (Eigen::Index c = 0; c < basis.cols(); ++c) {
        const CVector dir = basis.col(c);
        auto central = [&](double h) { return CVector((sample(y0 + h * dir) - sample(y0 - h * dir)) / (2 * h)); };
        J.col(c) = (4.0 * central(step / 2) - central(step)) / 3.0;
    }
    // Rows scaled to unit size so large coefficients do not mask small ones.
    for (Eigen::Index r = 0; r < J.rows(); ++r) {
        const double nr = J.row(r).norm();
        if (nr > 0)
            J.row(r) /= nr;
    }
    Eigen::JacobiSVD<CMatrix> svd(J);
    RankAudit audit;
    audit.tangent_dimension = int(basis.cols());
    const auto &s = svd.singularValues();
    for (Eigen::Index i = 0; i < s.size(); ++i)
        audit.singular_values.push_back(s(i));
    const double threshold = 1e-6 * (s.size() ? s(0) : 0.0);
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (s(i) > threshold)
            ++audit.rank;
    if (audit.rank < s.size())
        audit.gap = s(audit.rank - 1) / std::max(s(audit.rank), 1e-300);
    else
        audit.gap = std::numeric_limits<double>::infinity();
    audit.ill_conditioned = audit.gap < 1e2;
    return audit;
}

} // namespace spincal
