#include "spincal/dynamics.hpp"

#include "spincal/errors.hpp"
#include "spincal/rng.hpp"
#include "spincal/spectral.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

namespace spincal {

CVector PhasePoint::pack() const
{
    const int n = size();
    CVector y(2 * n + n * n);
    y.head(n) = x;
    y.segment(n, n) = p;
    y.tail(n * n) = Eigen::Map<const CVector>(f.data(), n * n);
    return y;
}

PhasePoint PhasePoint::unpack(const CVector &y, int N)
{
    PhasePoint pp;
    pp.x = y.head(N);
    pp.p = y.segment(N, N);
    pp.f = Eigen::Map<const CMatrix>(y.tail(N * N).data(), N, N);
    return pp;
}

PhasePoint seeded_phase_point(const OrbitSpec &spec, std::uint64_t seed, const InitialLayout &layout)
{
    PhasePoint pp;
    pp.f = sample_orbit(spec, seed);
    const int n = spec.N;
    CounterRng rng(seed, 1u << 20);
    pp.x.resize(n);
    pp.p.resize(n);
    const cplx dir = layout.direction / std::abs(layout.direction);
    for (int i = 0; i < n; ++i)
        pp.x(i) = (i - 0.5 * (n - 1)) * layout.spacing * dir + layout.jitter * rng.complex_normal();
    for (int i = 0; i < n; ++i)
        pp.p(i) = layout.momentum_scale * rng.complex_normal();
    return pp;
}

void check_collisions(const PhasePoint &pp, const Lattice &lat, Variant variant, double guard)
{
    const int n = pp.size();
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const cplx d = pp.x(i) - pp.x(j);
            const double dist = variant == Variant::rational ? std::abs(d) : lat.reduce(d).distance;
            if (!(dist >= guard))
                throw CollisionError("particles " + std::to_string(i + 1) + " and " + std::to_string(j + 1) +
                                     " collide");
        }
}

PairPotential pair_potential(cplx x, const Lattice &lat, Variant variant)
{
    if (variant == Variant::rational) {
        const cplx inv = 1.0 / x;
        return {inv * inv, -2.0 * inv * inv * inv};
    }
    return {wp(x, lat), wp_prime(x, lat)};
}

cplx hamiltonian(const PhasePoint &pp, const Lattice &lat, Variant variant, double guard)
{
    check_collisions(pp, lat, variant, guard);
    const int n = pp.size();
    cplx h = 0.5 * (pp.p.array() * pp.p.array()).sum();
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            h -= pp.f(i, j) * pp.f(j, i) * pair_potential(pp.x(i) - pp.x(j), lat, variant).value;
    return h;
}

CMatrix hamiltonian_spin_gradient(const PhasePoint &pp, const Lattice &lat, Variant variant)
{
    const int n = pp.size();
    CMatrix g = CMatrix::Zero(n, n);
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
            if (a != b)
                g(a, b) = -pp.f(b, a) * pair_potential(pp.x(a) - pp.x(b), lat, variant).value;
    return g;
}

PhaseVelocity eom(const PhasePoint &pp, const Lattice &lat, Variant variant, double guard)
{
    check_collisions(pp, lat, variant, guard);
    const int n = pp.size();
    PhaseVelocity v;
    v.dx = pp.p;
    v.dp = CVector::Zero(n);
    CMatrix w = CMatrix::Zero(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const PairPotential pot = pair_potential(pp.x(i) - pp.x(j), lat, variant);
            const cplx c = pp.f(i, j) * pp.f(j, i) * pot.derivative;
            v.dp(i) += c;
            v.dp(j) -= c;
            w(i, j) = pp.f(i, j) * pot.value;
            w(j, i) = pp.f(j, i) * pot.value;
        }
    v.df = w * pp.f - pp.f * w;
    return v;
}

cplx phase_bracket(const PhaseGradient &F, const PhaseGradient &G, const SpinMatrix &f)
{
    cplx c = (F.dp.array() * G.dx.array() - F.dx.array() * G.dp.array()).sum();
    return c - kirillov_bracket(F.df, G.df, f);
}

cplx symplectic_form(const SpinMatrix &f, const PhaseTangent &u, const PhaseTangent &v)
{
    const cplx canonical = (u.dp.array() * v.dx.array() - v.dp.array() * u.dx.array()).sum();
    return canonical + (f * (u.X * v.X - v.X * u.X)).trace();
}

PhaseTangent hamiltonian_vector_field(const PhaseGradient &F) { return {F.dp, -F.dx, F.df.transpose()}; }

namespace {

// Dormand-Prince 5(4) tableau.
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;

struct Rhs {
    const Lattice &lat;
    Variant variant;
    double guard;
    int n;
    std::size_t *count;

    CVector operator()(const CVector &y) const
    {
        ++*count;
        const PhaseVelocity v = eom(PhasePoint::unpack(y, n), lat, variant, guard);
        CVector out(y.size());
        out.head(n) = v.dx;
        out.segment(n, n) = v.dp;
        out.tail(n * n) = Eigen::Map<const CVector>(v.df.data(), n * n);
        return out;
    }
};

double error_norm(const CVector &err, const CVector &y0, const CVector &y1, double atol, double rtol)
{
    double acc = 0;
    for (Eigen::Index i = 0; i < err.size(); ++i) {
        const double sc = atol + rtol * std::max(std::abs(y0(i)), std::abs(y1(i)));
        const double r = std::abs(err(i)) / sc;
        acc += r * r;
    }
    return std::sqrt(acc / double(err.size()));
}

} // namespace

Trajectory integrate(const PhasePoint &pp0, double T, const Lattice &lat, Variant variant,
                     const IntegratorConfig &cfg)
{
    if (!(T >= 0))
        throw ConfigError("integrate: T must be non-negative");
    std::vector<double> samples = cfg.sample_times;
    if (samples.empty()) {
        const int m = std::max(cfg.samples, 2);
        for (int i = 0; i < m; ++i)
            samples.push_back(T * double(i) / double(m - 1));
        if (T == 0)
            samples.resize(1);
    }
    for (std::size_t i = 0; i < samples.size(); ++i)
        if (samples[i] < 0 || samples[i] > T || (i > 0 && !(samples[i] > samples[i - 1])))
            throw ConfigError("integrate: sample times must increase within [0, T]");

    Trajectory traj;
    const int n = pp0.size();
    Rhs rhs{lat, variant, cfg.collision_guard, n, &traj.stats.rhs_evaluations};

    CVector y = pp0.pack();
    CVector k1;
    try {
        k1 = rhs(y);
    } catch (const Error &e) {
        traj.failed = true;
        traj.failure = e.what();
        return traj;
    }

    double t = 0;
    std::size_t next = 0;
    if (!samples.empty() && samples[0] == 0.0) {
        traj.times.push_back(0.0);
        traj.states.push_back(pp0);
        next = 1;
    }
    double h = cfg.initial_step;
    std::size_t steps = 0;

    while (next < samples.size()) {
        const double target = samples[next];
        if (++steps > cfg.max_steps) {
            traj.failed = true;
            traj.failure = "integrate: step budget exhausted";
            return traj;
        }
        const bool clipped = t + h >= target;
        const double step = clipped ? target - t : h;

        CVector y1, k7, err;
        double err_norm = std::numeric_limits<double>::infinity();
        try {
            const CVector k2 = rhs(y + step * (a21 * k1));
            const CVector k3 = rhs(y + step * (a31 * k1 + a32 * k2));
            const CVector k4 = rhs(y + step * (a41 * k1 + a42 * k2 + a43 * k3));
            const CVector k5 = rhs(y + step * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
            const CVector k6 = rhs(y + step * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
            y1 = y + step * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
            k7 = rhs(y1);
            err = step * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
            err_norm = error_norm(err, y, y1, cfg.atol, cfg.rtol);
            if (!std::isfinite(err_norm))
                err_norm = std::numeric_limits<double>::infinity();
        } catch (const CollisionError &) {
        } catch (const LatticePoleError &) {
        } catch (const OverflowError &) {
        }

        if (err_norm <= 1.0) {
            t = clipped ? target : t + step;
            y = y1;
            k1 = k7;
            ++traj.stats.accepted;
            traj.stats.max_local_error = std::max(traj.stats.max_local_error, err_norm);
            if (clipped) {
                traj.times.push_back(target);
                traj.states.push_back(PhasePoint::unpack(y, n));
                ++next;
            }
            const double fac = err_norm == 0 ? 5.0 : std::clamp(0.9 * std::pow(err_norm, -0.2), 0.2, 5.0);
            h = clipped ? std::max(h, step * fac) : step * fac;
        } else {
            ++traj.stats.rejected;
            const double fac = std::isfinite(err_norm) ? std::clamp(0.9 * std::pow(err_norm, -0.2), 0.1, 0.5) : 0.25;
            h = step * fac;
            if (h < cfg.min_step) {
                traj.failed = true;
                traj.failure = "integrate: step size fell below min_step at t = " + std::to_string(t);
                return traj;
            }
        }
    }
    return traj;
}

double ConservationReport::worst() const
{
    return std::max({hamiltonian, diagonal, spin_eigenvalues, char_poly});
}

ConservationReport conservation_report(const Trajectory &traj, const Lattice &lat, Variant variant,
                                       const std::vector<cplx> &z_grid)
{
    ConservationReport rep;
    rep.char_poly_per_z.assign(z_grid.size(), 0.0);
    if (traj.states.empty())
        return rep;
    auto rel = [](cplx q, cplx q0) { return std::abs(q - q0) / std::max(std::abs(q0), 1.0); };

    const PhasePoint &s0 = traj.states.front();
    const int n = s0.size();
    const cplx h0 = hamiltonian(s0, lat, variant, 0.0);
    const std::vector<cplx> ev0 = eigenvalues(s0.f);
    std::vector<std::vector<cplx>> r0;
    for (cplx z : z_grid)
        r0.push_back(char_poly(s0, z, lat));

    for (std::size_t s = 1; s < traj.states.size(); ++s) {
        const PhasePoint &st = traj.states[s];
        rep.hamiltonian = std::max(rep.hamiltonian, rel(hamiltonian(st, lat, variant, 0.0), h0));
        for (int i = 0; i < n; ++i)
            rep.diagonal = std::max(rep.diagonal, rel(st.f(i, i), s0.f(i, i)));
        const std::vector<cplx> ev = eigenvalues(st.f);
        const auto perm = best_assignment(ev0, ev);
        for (int i = 0; i < n; ++i)
            rep.spin_eigenvalues = std::max(rep.spin_eigenvalues, rel(ev[perm[i]], ev0[i]));
        for (std::size_t m = 0; m < z_grid.size(); ++m) {
            const auto r = char_poly(st, z_grid[m], lat);
            for (int j = 1; j <= n; ++j)
                rep.char_poly_per_z[m] = std::max(rep.char_poly_per_z[m], rel(r[j], r0[m][j]));
            rep.char_poly = std::max(rep.char_poly, rep.char_poly_per_z[m]);
        }
    }
    return rep;
}

PhasePoint time_reversed(const PhasePoint &pp)
{
    PhasePoint out = pp;
    out.p = -pp.p;
    out.f = pp.f.transpose();
    return out;
}

std::vector<std::string> trajectory_columns(int N)
{
    std::vector<std::string> cols{"t"};
    for (const char *name : {"x", "p"})
        for (int i = 1; i <= N; ++i) {
            cols.push_back(std::string(name) + std::to_string(i) + "_re");
            cols.push_back(std::string(name) + std::to_string(i) + "_im");
        }
    for (int i = 1; i <= N; ++i)
        for (int j = 1; j <= N; ++j) {
            const std::string base = "f" + std::to_string(i) + "_" + std::to_string(j);
            cols.push_back(base + "_re");
            cols.push_back(base + "_im");
        }
    return cols;
}

void write_trajectory_csv(std::ostream &out, const Trajectory &traj)
{
    if (traj.states.empty())
        return;
    const int n = traj.states.front().size();
    const auto cols = trajectory_columns(n);
    for (std::size_t c = 0; c < cols.size(); ++c)
        out << (c ? "," : "") << cols[c];
    out << '\n';
    char buf[64];
    auto put = [&](double v) {
        std::snprintf(buf, sizeof buf, ",%.17g", v);
        out << buf;
    };
    for (std::size_t s = 0; s < traj.states.size(); ++s) {
        const PhasePoint &pp = traj.states[s];
        std::snprintf(buf, sizeof buf, "%.17g", traj.times[s]);
        out << buf;
        for (int i = 0; i < n; ++i) {
            put(pp.x(i).real());
            put(pp.x(i).imag());
        }
        for (int i = 0; i < n; ++i) {
            put(pp.p(i).real());
            put(pp.p(i).imag());
        }
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                put(pp.f(i, j).real());
                put(pp.f(i, j).imag());
            }
        out << '\n';
    }
}

} // namespace spincal
