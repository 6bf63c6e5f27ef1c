#include "spincal/geometry.hpp"

#include "spincal/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace spincal {

namespace {

constexpr double two_pi = 2 * std::numbers::pi;

double min_gap(const std::vector<cplx> &r)
{
    double g = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < r.size(); ++i)
        for (std::size_t j = i + 1; j < r.size(); ++j)
            g = std::min(g, std::abs(r[i] - r[j]));
    return g;
}

int nearest(const std::vector<cplx> &roots, cplx k)
{
    int best = 0;
    for (int a = 1; a < int(roots.size()); ++a)
        if (std::abs(roots[a] - k) < std::abs(roots[best] - k))
            best = a;
    return best;
}

cplx wp_coefficient(int c, cplx z, const Lattice &lat)
{
    switch (c) {
    case 0:
        return 1.0;
    case 1:
        return wp(z, lat);
    default:
        return wp_prime(z, lat);
    }
}

// Candidate values c_m(z) k^j / R_k at one curve point.
CVector candidate_values(const PhasePoint &pp, const Lattice &lat, const std::vector<Candidate> &cands, cplx z, cplx k)
{
    const cplx rk = curve_value(char_poly(pp, z, lat), k).second;
    CVector v(cands.size());
    for (std::size_t m = 0; m < cands.size(); ++m)
        v(m) = wp_coefficient(cands[m].coefficient, z, lat) * std::pow(k, cands[m].k_power) / rk;
    return v;
}

using VectorIntegrand = std::function<CVector(cplx, cplx)>;

// Gauss-Legendre sums with n and 2n nodes on every tracked interval.
std::pair<CVector, CVector> integrate_vector(const PhasePoint &pp, const Lattice &lat, const CyclePath &path,
                                             const SheetTrack &track, const VectorIntegrand &F, int nodes, int sheet)
{
    if (sheet < 0)
        sheet = track.start_sheet;
    const auto [x1, w1] = gauss_legendre(nodes);
    const auto [x2, w2] = gauss_legendre(2 * nodes);
    CVector lo, hi;
    auto accumulate = [&](CVector &acc, const std::vector<double> &x, const std::vector<double> &w, std::size_t n) {
        const double a = track.t[n], b = track.t[n + 1];
        for (std::size_t q = 0; q < x.size(); ++q) {
            const double t = a + (b - a) * (1 + x[q]) / 2;
            const double u = (t - a) / (b - a);
            const cplx guess = (1 - u) * track.k[n][sheet] + u * track.k[n + 1][sheet];
            const cplx z = path.point(t);
            const auto roots = sheets(pp, lat, z);
            const cplx k = roots[nearest(roots, guess)];
            const CVector f = F(z, k) * (path.derivative(t) * (w[q] * (b - a) / 2));
            if (acc.size() == 0)
                acc = f;
            else
                acc += f;
        }
    };
    for (std::size_t n = 0; n + 1 < track.t.size(); ++n) {
        accumulate(lo, x1, w1, n);
        accumulate(hi, x2, w2, n);
    }
    return {lo, hi};
}

// One path segment of a closed straight lift: z0 + j * 2 w -> z0 + (j + 1) * 2 w.
CyclePath repeated_line(cplx z0, cplx step, int times, int sheet, std::string label)
{
    CyclePath p;
    for (int j = 0; j < times; ++j)
        p.segments.push_back(PathSegment::line(z0 + double(j) * step, z0 + double(j + 1) * step));
    p.start_sheet = sheet;
    p.label = std::move(label);
    return p;
}

std::vector<std::vector<int>> permutation_cycles(const std::vector<int> &perm)
{
    std::vector<std::vector<int>> out;
    std::vector<bool> seen(perm.size(), false);
    for (std::size_t a = 0; a < perm.size(); ++a) {
        if (seen[a])
            continue;
        std::vector<int> cyc;
        for (int b = int(a); !seen[b]; b = perm[b]) {
            seen[b] = true;
            cyc.push_back(b);
        }
        out.push_back(cyc);
    }
    return out;
}

// Fourier coefficients of negative order of omega / d tau around one special point, one row per order.
CMatrix laurent_rows(const PhasePoint &pp, const Lattice &lat, const std::vector<Candidate> &cands,
                     const SpecialPoint &sp, const BasisConfig &cfg, std::vector<double> &sumsq, int &samples)
{
    const int m = sp.cycle_length;
    CyclePath circle;
    circle.segments.push_back(PathSegment::arc(sp.z, sp.radius, 0.0, two_pi * m));
    circle.start_sheet = sp.sheet;
    const SheetTrack tr = sheet_track(pp, lat, circle, cfg.track);
    const int M = cfg.circle_points;
    const double rho_tau = std::pow(sp.radius, 1.0 / m);
    CMatrix rows = CMatrix::Zero(cfg.laurent_terms, cands.size());
    for (int n = 0; n < M; ++n) {
        const double t = double(n) / M;
        const double phi = two_pi * t; // angle of tau
        const cplx z = circle.point(t);
        const cplx tau = std::polar(rho_tau, phi);
        const cplx dz_dtau = double(m) * std::pow(tau, m - 1);
        const CVector g = candidate_values(pp, lat, cands, z, tracked_k(pp, lat, circle, tr, t, sp.sheet)) * dz_dtau;
        for (Eigen::Index c = 0; c < g.size(); ++c)
            sumsq[c] += std::norm(g(c));
        for (int q = 1; q <= cfg.laurent_terms; ++q)
            rows.row(q - 1) += g.transpose() * (std::polar(1.0, q * phi) / double(M));
        ++samples;
    }
    return rows;
}

} // namespace

PathSegment PathSegment::line(cplx from, cplx to)
{
    PathSegment s;
    s.kind = Kind::line;
    s.a = from;
    s.b = to;
    return s;
}

PathSegment PathSegment::arc(cplx c, double r, double t0, double dt)
{
    PathSegment s;
    s.kind = Kind::arc;
    s.center = c;
    s.radius = r;
    s.theta0 = t0;
    s.dtheta = dt;
    return s;
}

cplx PathSegment::point(double t) const
{
    if (kind == Kind::line)
        return a + (b - a) * t;
    return center + std::polar(radius, theta0 + dtheta * t);
}

cplx PathSegment::derivative(double t) const
{
    if (kind == Kind::line)
        return b - a;
    return cplx(0, dtheta) * std::polar(radius, theta0 + dtheta * t);
}

namespace {

std::pair<const PathSegment *, double> locate(const CyclePath &p, double t)
{
    if (p.segments.empty())
        throw ConfigError("CyclePath: no segments");
    const int i = std::clamp(int(std::floor(t)), 0, int(p.segments.size()) - 1);
    return {&p.segments[i], t - i};
}

} // namespace

cplx CyclePath::point(double t) const
{
    const auto [s, u] = locate(*this, t);
    return s->point(u);
}

cplx CyclePath::derivative(double t) const
{
    const auto [s, u] = locate(*this, t);
    return s->derivative(u);
}

bool CyclePath::closed(const Lattice &lat, double tol) const
{
    const cplx d = point(length()) - point(0);
    if (lat.kind() == LatticeKind::rational)
        return std::abs(d) < tol;
    return std::abs(lat.reduce(d).z0) < tol * std::max(1.0, std::abs(lat.omega1()));
}

SheetTrack sheet_track(const PhasePoint &pp, const Lattice &lat, const CyclePath &path, const TrackConfig &cfg)
{
    SheetTrack tr;
    tr.start_sheet = path.start_sheet;
    auto roots = sheets(pp, lat, path.point(0));
    if (path.start_sheet < 0 || path.start_sheet >= int(roots.size()))
        throw ConfigError("sheet_track: start sheet out of range");
    tr.t.push_back(0);
    tr.z.push_back(path.point(0));
    tr.k.push_back(roots);
    for (std::size_t seg = 0; seg < path.segments.size(); ++seg) {
        double t = 0, h = std::min(cfg.initial_step, cfg.max_step);
        while (t < 1) {
            const double step = std::min({h, 1 - t, cfg.max_step});
            const double tn = (1 - t - step) < 1e-14 ? 1.0 : t + step;
            const cplx z = path.segments[seg].point(tn);
            const auto fresh = sheets(pp, lat, z);
            const auto &prev = tr.k.back();
            const auto perm = best_assignment(prev, fresh);
            double motion = 0;
            for (std::size_t a = 0; a < prev.size(); ++a)
                motion = std::max(motion, std::abs(fresh[perm[a]] - prev[a]));
            const double gap = std::min(min_gap(fresh), min_gap(prev));
            if (gap < cfg.separation_factor * motion) {
                h = step / 2;
                ++tr.rejected;
                if (h < cfg.min_step)
                    throw TrackingError("sheet_track: step below minimum near z = " + std::to_string(z.real()) +
                                        (z.imag() < 0 ? "" : "+") + std::to_string(z.imag()) + "i");
                continue;
            }
            std::vector<cplx> next(prev.size());
            for (std::size_t a = 0; a < prev.size(); ++a)
                next[a] = fresh[perm[a]];
            tr.t.push_back(double(seg) + tn);
            tr.z.push_back(z);
            tr.k.push_back(next);
            t = tn;
            h = gap > 4 * cfg.separation_factor * motion ? 2 * step : step;
        }
    }
    const auto end = sheets(pp, lat, tr.z.back());
    for (cplx k : tr.k.back())
        tr.permutation.push_back(nearest(end, k));
    return tr;
}

cplx tracked_k(const PhasePoint &pp, const Lattice &lat, const CyclePath &path, const SheetTrack &track, double t,
               int alpha)
{
    const auto it = std::upper_bound(track.t.begin(), track.t.end(), t);
    std::size_t n = it == track.t.begin() ? 0 : std::size_t(it - track.t.begin()) - 1;
    n = std::min(n, track.t.size() - 2);
    const double u = std::clamp((t - track.t[n]) / (track.t[n + 1] - track.t[n]), 0.0, 1.0);
    const cplx guess = (1 - u) * track.k[n][alpha] + u * track.k[n + 1][alpha];
    const auto roots = sheets(pp, lat, path.point(t));
    return roots[nearest(roots, guess)];
}

std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int n)
{
    std::vector<double> x(n), w(n);
    for (int i = 0; i < n; ++i) {
        double r = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 1;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1, p1 = r;
            for (int j = 2; j <= n; ++j) {
                const double p2 = ((2 * j - 1) * r * p1 - (j - 1) * p0) / j;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (r * p1 - p0) / (r * r - 1);
            const double dr = p1 / dp;
            r -= dr;
            if (std::abs(dr) < 1e-16)
                break;
        }
        x[i] = r;
        w[i] = 2 / ((1 - r * r) * dp * dp);
    }
    return {x, w};
}

PathIntegral integrate_along(const PhasePoint &pp, const Lattice &lat, const CyclePath &path, const SheetTrack &track,
                             const std::function<cplx(cplx, cplx)> &F, int nodes, int sheet)
{
    const auto [lo, hi] = integrate_vector(
        pp, lat, path, track, [&](cplx z, cplx k) { return CVector::Constant(1, F(z, k)); }, nodes, sheet);
    return {hi(0), std::abs(hi(0) - lo(0))};
}

PathIntegral action_integral(const PhasePoint &pp, const Lattice &lat, const CyclePath &path, const TrackConfig &cfg)
{
    const SheetTrack tr = sheet_track(pp, lat, path, cfg);
    return integrate_along(pp, lat, path, tr, [](cplx, cplx k) { return k; });
}

double path_clearance(const CyclePath &path, const Lattice &lat, const std::vector<cplx> &points, int samples)
{
    double d = std::numeric_limits<double>::infinity();
    for (int n = 0; n <= samples; ++n) {
        const cplx z = path.point(path.length() * n / samples);
        for (cplx p : points)
            d = std::min(d, lat.kind() == LatticeKind::rational ? std::abs(z - p) : std::abs(lat.reduce(z - p).z0));
    }
    return d;
}

std::vector<SpecialPoint> special_points(const PhasePoint &pp, const Lattice &lat, double circle_fraction,
                                         const TrackConfig &cfg)
{
    std::vector<cplx> centres{0.0};
    for (const auto &bp : branch_points(pp, lat))
        centres.push_back(bp.z);
    const double cap = 0.5 * std::min(std::abs(lat.omega1()), std::abs(lat.omega2()));
    std::vector<SpecialPoint> out;
    for (std::size_t c = 0; c < centres.size(); ++c) {
        double d = cap / circle_fraction;
        for (std::size_t o = 0; o < centres.size(); ++o)
            if (o != c)
                d = std::min(d, std::abs(lat.reduce(centres[c] - centres[o]).z0));
        const double radius = circle_fraction * d;
        CyclePath circle;
        circle.segments.push_back(PathSegment::arc(centres[c], radius, 0.0, two_pi));
        const SheetTrack tr = sheet_track(pp, lat, circle, cfg);
        for (const auto &cyc : permutation_cycles(tr.permutation))
            out.push_back({centres[c], cyc.front(), int(cyc.size()), radius});
    }
    return out;
}

std::vector<CyclePath> candidate_cycles(const PhasePoint &pp, const Lattice &lat,
                                        const std::vector<SpecialPoint> &special, const TrackConfig &cfg)
{
    std::vector<cplx> avoid;
    for (const auto &sp : special)
        avoid.push_back(sp.z);
    const int n = pp.size();
    std::vector<CyclePath> out;
    const std::array<cplx, 2> dirs{lat.omega1(), lat.omega2()};
    for (int d = 0; d < 2; ++d) {
        const cplx step = 2.0 * dirs[d], across = 2.0 * dirs[1 - d];
        // two offsets: the clearest line, then the clearest one at least a quarter cell away
        std::vector<std::pair<double, double>> scored;
        for (int i = 0; i < 48; ++i) {
            const double s = -0.5 + (i + 0.5) / 48;
            scored.push_back({path_clearance(repeated_line(s * across, step, 1, 0, ""), lat, avoid, 96), s});
        }
        std::sort(scored.rbegin(), scored.rend());
        std::vector<double> offsets{scored[0].second};
        for (const auto &[c, s] : scored) {
            double sep = std::abs(s - offsets[0]);
            sep = std::min(sep, 1 - sep);
            if (sep > 0.25) {
                offsets.push_back(s);
                break;
            }
        }
        for (std::size_t o = 0; o < offsets.size(); ++o) {
            const cplx z0 = offsets[o] * across;
            const SheetTrack tr = sheet_track(pp, lat, repeated_line(z0, step, 1, 0, ""), cfg);
            for (int a = 0; a < n; ++a) {
                int len = 1;
                for (int b = tr.permutation[a]; b != a; b = tr.permutation[b])
                    ++len;
                out.push_back(repeated_line(z0, step, len, a,
                                            std::string(d == 0 ? "w1" : "w2") + "/line" + std::to_string(o) + "/sheet" +
                                                std::to_string(a) + (len > 1 ? "/x" + std::to_string(len) : "")));
            }
        }
    }
    // first the lifts of both base cycles on the clearest lines from sheet 0
    std::stable_sort(out.begin(), out.end(), [](const CyclePath &a, const CyclePath &b) {
        auto rank = [](const CyclePath &p) { return (p.label.find("line0/sheet0") != std::string::npos) ? 0 : 1; };
        return rank(a) < rank(b);
    });
    return out;
}

cplx HolomorphicBasis::candidate_value(int m, cplx z, cplx k) const
{
    return candidate_values(pp, lat, {candidates[m]}, z, k)(0);
}

CVector HolomorphicBasis::values(cplx z, cplx k) const
{
    return coefficients * candidate_values(pp, lat, candidates, z, k);
}

cplx HolomorphicBasis::value(int i, cplx z, cplx k) const { return values(z, k)(i); }

HolomorphicBasis holomorphic_basis(const PhasePoint &pp, const Lattice &lat, const BasisConfig &cfg)
{
    if (lat.kind() != LatticeKind::elliptic)
        throw ConfigError("holomorphic_basis requires an elliptic lattice");
    HolomorphicBasis b;
    b.pp = pp;
    b.lat = lat;
    const int l = numerical_rank(pp.f);
    b.genus = genus(pp.size(), l);
    b.supported = pp.size() == 2 && l == 1;
    for (int c = 0; c < 3; ++c)
        for (int j = 0; j <= cfg.max_k_power; ++j)
            b.candidates.push_back({c, j});
    const int nc = int(b.candidates.size());

    b.special_points = special_points(pp, lat, cfg.circle_fraction, cfg.track);
    std::vector<CMatrix> blocks;
    std::vector<double> sumsq(nc, 0.0);
    int samples = 0;
    for (const auto &sp : b.special_points)
        blocks.push_back(laurent_rows(pp, lat, b.candidates, sp, cfg, sumsq, samples));
    CMatrix A(cfg.laurent_terms * Eigen::Index(blocks.size()), nc);
    for (std::size_t i = 0; i < blocks.size(); ++i)
        A.middleRows(Eigen::Index(i) * cfg.laurent_terms, cfg.laurent_terms) = blocks[i];
    RVector scale(nc);
    for (int c = 0; c < nc; ++c) {
        scale(c) = std::sqrt(sumsq[c] / samples);
        A.col(c) /= scale(c);
    }
    Eigen::JacobiSVD<CMatrix> svd(A, Eigen::ComputeFullV);
    const auto &s = svd.singularValues();
    b.regularity_singular_values.assign(s.data(), s.data() + s.size());
    int rank = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (s(i) > cfg.null_tol * std::max(1.0, s(0)))
            ++rank;
    const int dim = nc - rank;
    if (dim != b.genus)
        throw ConvergenceError("holomorphic_basis: regular subspace has dimension " + std::to_string(dim) +
                               ", expected " + std::to_string(b.genus));
    b.raw = CMatrix(dim, nc);
    for (int i = 0; i < dim; ++i)
        for (int c = 0; c < nc; ++c)
            b.raw(i, c) = svd.matrixV()(c, rank + i) / scale(c);

    // A-cycles: greedy selection of independent period vectors
    const auto cands = candidate_cycles(pp, lat, b.special_points, cfg.track);
    std::vector<CMatrix> cand_periods; // ncand x 1 (8 nodes) and 16 nodes for each chosen cycle
    CMatrix periods(b.genus, 0);
    CMatrix candidate_hi(nc, 0);
    for (const auto &cyc : cands) {
        if (int(b.cycles.size()) == b.genus)
            break;
        const SheetTrack tr = sheet_track(pp, lat, cyc, cfg.track);
        const auto [lo, hi] = integrate_vector(
            pp, lat, cyc, tr, [&](cplx z, cplx k) { return candidate_values(pp, lat, b.candidates, z, k); }, 8, -1);
        CMatrix trial(b.genus, periods.cols() + 1);
        trial << periods, b.raw * lo;
        Eigen::JacobiSVD<CMatrix> check(trial);
        const auto &sv = check.singularValues();
        if (sv(sv.size() - 1) > 1e-6 * sv(0)) {
            periods = trial;
            CMatrix h(nc, candidate_hi.cols() + 1);
            h << candidate_hi, hi;
            candidate_hi = h;
            b.cycles.push_back(cyc);
        }
    }
    if (int(b.cycles.size()) != b.genus)
        throw ConvergenceError("holomorphic_basis: found " + std::to_string(b.cycles.size()) +
                               " independent cycles, expected " + std::to_string(b.genus));
    b.raw_periods = periods;
    b.coefficients = periods.partialPivLu().solve(b.raw);
    b.normalization = b.coefficients * candidate_hi;
    return b;
}

std::vector<cplx> abel_sum(const HolomorphicBasis &basis, const std::vector<DivisorPoint> &points, cplx base_z,
                           const TrackConfig &cfg)
{
    CVector theta = CVector::Zero(basis.genus);
    for (const auto &pt : points) {
        bool done = false;
        for (int a = 0; a < basis.pp.size() && !done; ++a) {
            CyclePath path;
            path.segments.push_back(PathSegment::line(base_z, pt.z));
            path.start_sheet = a;
            const SheetTrack tr = sheet_track(basis.pp, basis.lat, path, cfg);
            const auto end = sheets(basis.pp, basis.lat, pt.z);
            if (nearest(end, tr.k_end()) != nearest(end, pt.k))
                continue;
            theta += integrate_vector(
                         basis.pp, basis.lat, path, tr, [&](cplx z, cplx k) { return basis.values(z, k); }, 8, -1)
                         .second;
            done = true;
        }
        if (!done)
            throw TrackingError("abel_sum: no sheet above the base point continues to the divisor point");
    }
    return {theta.data(), theta.data() + theta.size()};
}

CVector translation_vector(const HolomorphicBasis &basis, double radius, int samples)
{
    // the sheet sum is single valued near z = 0, so its circle average is the value at the centre
    CVector u = CVector::Zero(basis.genus);
    for (int n = 0; n < samples; ++n) {
        const cplx z = std::polar(radius, two_pi * (n + 0.5) / samples);
        for (cplx k : sheets(basis.pp, basis.lat, z))
            u += basis.values(z, k);
    }
    return u / double(samples);
}

namespace {

double clearance(cplx z, const Lattice &lat, const std::vector<cplx> &special)
{
    double d = std::numeric_limits<double>::infinity();
    for (cplx s : special)
        d = std::min(d, std::abs(lat.reduce(z - s).z0));
    return d;
}

// Divisor snapshots from `from` to `to`. Intervals are bisected by re-integrating the flow until every point
// moves less than half its distance to the special points, so the chord is homotopic to the true path.
std::vector<std::vector<DivisorPoint>> divisor_steps(const PhasePoint &from, const PhasePoint &to, double dt,
                                                     const Lattice &lat, const std::vector<DivisorPoint> &points,
                                                     const std::vector<cplx> &special, int depth)
{
    try {
        auto next = track_divisor(to, lat, points);
        bool short_enough = true;
        for (std::size_t i = 0; i < points.size(); ++i)
            short_enough = short_enough && std::abs(next[i].z - points[i].z) < 0.5 * clearance(points[i].z, lat, special);
        if (short_enough)
            return {next};
    } catch (const TrackingError &) {
    }
    if (depth >= 16)
        throw TrackingError("linear_flow_check: divisor cannot be followed between samples");
    IntegratorConfig ic;
    ic.sample_times = {0.0, dt / 2};
    const Trajectory half = integrate(from, dt / 2, lat, Variant::elliptic, ic);
    if (half.failed)
        throw TrackingError("linear_flow_check: sub-step integration failed: " + half.failure);
    const PhasePoint &mid = half.states.back();
    auto out = divisor_steps(from, mid, dt / 2, lat, points, special, depth + 1);
    auto rest = divisor_steps(mid, to, dt / 2, lat, out.back(), special, depth + 1);
    out.insert(out.end(), rest.begin(), rest.end());
    return out;
}

} // namespace

LinearFlowReport linear_flow_check(const Trajectory &traj, const Lattice &lat, const BasisConfig &cfg)
{
    if (traj.states.empty())
        throw ConfigError("linear_flow_check: empty trajectory");
    return linear_flow_check(traj, holomorphic_basis(traj.states.front(), lat, cfg), cfg.track);
}

LinearFlowReport linear_flow_check(const Trajectory &traj, const HolomorphicBasis &basis, const TrackConfig &cfg)
{
    const std::size_t n = traj.states.size();
    if (n < 5)
        throw ConfigError("linear_flow_check: need at least 5 samples");
    if (traj.failed)
        throw ConfigError("linear_flow_check: trajectory failed: " + traj.failure);
    const double dt = traj.times[1] - traj.times[0];
    for (std::size_t i = 1; i < n; ++i)
        if (std::abs(traj.times[i] - traj.times[i - 1] - dt) > 1e-9 * std::abs(dt))
            throw ConfigError("linear_flow_check: samples must be equally spaced");

    const Lattice &lat = basis.lat;
    const DivisorSearch d0 = divisor(traj.states.front(), lat);
    if (!d0.complete())
        throw ConvergenceError("linear_flow_check: incomplete divisor at t0");
    const CVector u = translation_vector(basis);

    LinearFlowReport rep;
    rep.times = traj.times;
    CVector theta = CVector::Zero(basis.genus);
    rep.theta.push_back(theta);
    auto points = d0.points;
    std::vector<cplx> special;
    for (const auto &sp : basis.special_points)
        special.push_back(sp.z);
    for (std::size_t s = 1; s < n; ++s) {
        for (const auto &next : divisor_steps(traj.states[s - 1], traj.states[s], dt, lat, points, special, 0)) {
            for (std::size_t i = 0; i < points.size(); ++i) {
                CyclePath path;
                path.segments.push_back(PathSegment::line(points[i].z, next[i].z));
                const auto start = sheets(basis.pp, lat, points[i].z);
                path.start_sheet = nearest(start, points[i].k);
                const SheetTrack tr = sheet_track(basis.pp, lat, path, cfg);
                const auto end = sheets(basis.pp, lat, next[i].z);
                if (nearest(end, tr.k_end()) != nearest(end, next[i].k))
                    throw TrackingError("linear_flow_check: divisor increment ended on another sheet");
                theta += integrate_vector(
                             basis.pp, lat, path, tr, [&](cplx z, cplx k) { return basis.values(z, k); }, 8, -1)
                             .second;
            }
            points = next;
        }
        theta -= (traj.states[s].x(0) - traj.states[s - 1].x(0)) * u;
        rep.theta.push_back(theta);
    }
    for (std::size_t s = 1; s < n; ++s) {
        rep.max_first_difference = std::max(rep.max_first_difference, (rep.theta[s] - rep.theta[s - 1]).cwiseAbs().maxCoeff());
        if (s + 1 < n)
            rep.max_second_difference =
                std::max(rep.max_second_difference,
                         (rep.theta[s + 1] - 2.0 * rep.theta[s] + rep.theta[s - 1]).cwiseAbs().maxCoeff());
    }
    rep.ratio = rep.max_first_difference > 0 ? rep.max_second_difference / rep.max_first_difference : 0.0;
    return rep;
}

ActionSeries action_series(const Trajectory &traj, const Lattice &lat, std::vector<CyclePath> cycles,
                           const TrackConfig &cfg)
{
    ActionSeries out;
    out.times = traj.times;
    std::vector<cplx> start_k;
    for (std::size_t s = 0; s < traj.states.size(); ++s) {
        const PhasePoint &pp = traj.states[s];
        CVector a(cycles.size());
        for (std::size_t c = 0; c < cycles.size(); ++c) {
            const auto roots = sheets(pp, lat, cycles[c].point(0));
            if (s == 0)
                start_k.push_back(roots[cycles[c].start_sheet]);
            cycles[c].start_sheet = nearest(roots, start_k[c]);
            start_k[c] = roots[cycles[c].start_sheet];
            const SheetTrack tr = sheet_track(pp, lat, cycles[c], cfg);
            if (std::abs(tr.k_end() - tr.k_start()) > 1e-8 * (1 + std::abs(tr.k_start())))
                throw TrackingError("action_series: cycle " + cycles[c].label + " does not close on the curve");
            const PathIntegral pi = integrate_along(pp, lat, cycles[c], tr, [](cplx, cplx k) { return k; });
            a(c) = pi.value;
            out.max_error = std::max(out.max_error, pi.error);
        }
        out.actions.push_back(a);
    }
    for (const auto &a : out.actions)
        for (Eigen::Index c = 0; c < a.size(); ++c)
            out.max_drift = std::max(out.max_drift, std::abs(a(c) - out.actions[0](c)) /
                                                        std::max(1.0, std::abs(out.actions[0](c))));
    return out;
}

} // namespace spincal
