#include "spincal/errors.hpp"
#include "spincal/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>

namespace spincal {

namespace {

constexpr double two_pi = 2 * std::numbers::pi;

std::string fmt(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3e", v);
    return buf;
}

std::string fmt(cplx v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g%+.9gi", v.real(), v.imag());
    return buf;
}

// Runs one stage; library failures other than configuration errors become a failed check.
template <class F>
void stage(RunReport &r, const std::string &name, F &&f)
{
    const auto t0 = std::chrono::steady_clock::now();
    try {
        f();
    } catch (const ConfigError &) {
        throw;
    } catch (const Error &e) {
        r.flag("stage:" + name, false, e.what());
    }
    r.stage_seconds.emplace_back(name, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
}

// Laurent coefficient c_n of h at 0 by the trapezoid rule on |z| = radius.
cplx laurent(const std::function<cplx(cplx)> &h, int n, double radius, int points = 64)
{
    cplx acc = 0;
    for (int k = 0; k < points; ++k) {
        const cplx z = std::polar(radius, two_pi * (k + 0.5) / points);
        acc += h(z) * std::pow(z, -n);
    }
    return acc / double(points);
}

cplx derivative(const std::function<cplx(cplx)> &h, cplx z, double radius) { return laurent([&](cplx t) { return h(z + t); }, 1, radius, 32); }

CMatrix cauchy_gradient(const std::function<cplx(const CMatrix &)> &F, const CMatrix &f)
{
    const Eigen::Index n = f.rows();
    CMatrix g(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            g(i, j) = laurent(
                [&](cplx t) {
                    CMatrix ft = f;
                    ft(i, j) += t;
                    return F(ft);
                },
                1, 0.5, 16);
    return g;
}

CMatrix random_matrix(CounterRng &rng, int n)
{
    CMatrix m(n, n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i)
            m(i, j) = rng.complex_normal();
    return m;
}

std::vector<std::string> complex_columns(const std::string &prefix, int count)
{
    std::vector<std::string> c;
    for (int i = 1; i <= count; ++i) {
        c.push_back(prefix + std::to_string(i) + "_re");
        c.push_back(prefix + std::to_string(i) + "_im");
    }
    return c;
}

void push_complex(std::vector<double> &row, cplx v)
{
    row.push_back(v.real());
    row.push_back(v.imag());
}

Trajectory run_flow(const PhasePoint &pp, const ExperimentConfig &cfg, const Lattice &lat)
{
    IntegratorConfig ic;
    ic.rtol = cfg.integrator.rtol;
    ic.atol = cfg.integrator.atol;
    ic.samples = cfg.integrator.samples;
    return integrate(pp, cfg.integrator.T, lat, cfg.model.variant, ic);
}

void require_elliptic(const ExperimentConfig &cfg, const char *command)
{
    if (cfg.model.lattice.kind != "elliptic")
        throw ConfigError(std::string(command) + " requires an elliptic lattice");
}

void require_seed(const ExperimentConfig &cfg, const char *command)
{
    if (!cfg.seed)
        throw ConfigError(std::string(command) + " samples random data and needs a seed");
}

RunReport start(const char *command, const ExperimentConfig &cfg)
{
    cfg.validate();
    RunReport r;
    r.command = command;
    r.config_hash = config_hash(cfg);
    return r;
}

} // namespace

bool RunReport::passed() const
{
    for (const auto &c : checks)
        if (!c.passed)
            return false;
    return true;
}

CheckResult &RunReport::check(std::string name, double value, double threshold, std::string relation,
                              std::string detail)
{
    CheckResult c;
    c.name = std::move(name);
    c.value = value;
    c.threshold = threshold;
    c.relation = relation;
    c.detail = std::move(detail);
    if (relation == "<")
        c.passed = value < threshold;
    else if (relation == ">")
        c.passed = value > threshold;
    else if (relation == "==")
        c.passed = value == threshold;
    else
        throw ConfigError("RunReport::check: unknown relation " + relation);
    checks.push_back(std::move(c));
    return checks.back();
}

CheckResult &RunReport::flag(std::string name, bool ok, std::string detail)
{
    CheckResult c;
    c.name = std::move(name);
    c.passed = ok;
    c.value = ok ? 1 : 0;
    c.threshold = 1;
    c.detail = std::move(detail);
    checks.push_back(std::move(c));
    return checks.back();
}

const CheckResult *RunReport::find(std::string_view name) const
{
    for (const auto &c : checks)
        if (c.name == name)
            return &c;
    return nullptr;
}

Lattice make_lattice(const LatticeConfig &cfg)
{
    if (cfg.kind == "elliptic")
        return Lattice::elliptic(cfg.omega1, cfg.omega2);
    if (cfg.kind == "trigonometric")
        return Lattice::trigonometric(cfg.omega1);
    if (cfg.kind == "rational")
        return Lattice::rational();
    throw ConfigError("unknown lattice kind " + cfg.kind);
}

PhasePoint initial_point(const ExperimentConfig &cfg, std::uint64_t offset)
{
    if (cfg.initial.mode == "explicit") {
        if (offset != 0)
            throw ConfigError("explicit initial conditions give a single phase point");
        PhasePoint pp;
        const int n = cfg.model.N;
        pp.x = Eigen::Map<const CVector>(cfg.initial.x.data(), n);
        pp.p = Eigen::Map<const CVector>(cfg.initial.p.data(), n);
        pp.f = cfg.initial.f;
        const SpinCheck sc = check_spin_matrix(pp.f, cfg.model.orbit());
        if (!sc.ok(cfg.model.orbit(), 1e-8))
            throw ConfigError("initial.f is not on the configured orbit");
        return pp;
    }
    if (!cfg.seed)
        throw ConfigError("seeded initial conditions need a seed");
    return seeded_phase_point(cfg.model.orbit(), *cfg.seed + offset, cfg.initial.layout);
}

DofAudit dof_audit(int N, int l)
{
    if (N < 2 || l < 1 || l > N - 1)
        throw ConfigError("dof_audit: need N >= 2 and 1 <= l <= N-1");
    DofAudit a;
    a.particle = 2 * N;
    a.orbit = 2 * N * l - l * l - l;
    a.reduction = -2 * (N - 1);
    a.total = a.particle + a.orbit + a.reduction;
    a.two_g = 2 * genus(N, l);
    a.equal = a.total == a.two_g;
    return a;
}

void kernel_identity_checks(RunReport &r, const Lattice &lat, double tol)
{
    const bool has1 = lat.kind() != LatticeKind::rational, has2 = lat.kind() == LatticeKind::elliptic;
    const cplx w1 = has1 ? lat.omega1() : 1.0, w2 = has2 ? lat.omega2() : cplx(0, 1);
    const std::pair<double, double> cell[] = {{0.31, 0.17}, {-0.42, 0.23}, {0.13, -0.38}, {0.57, 0.44}, {-0.21, -0.33}, {0.66, -0.12}};
    std::vector<cplx> zs, xs;
    for (const auto &[a, b] : cell) {
        zs.push_back(a * w1 + b * w2);
        xs.push_back(-0.7 * b * w1 + 0.9 * a * w2);
    }
    std::vector<cplx> periods;
    std::vector<cplx> etas;
    if (has1) {
        periods.push_back(w1);
        etas.push_back(lat.eta1());
    }
    if (has2) {
        periods.push_back(w2);
        etas.push_back(lat.eta2());
    }
    auto rel = [](cplx a, cplx b) { return std::abs(a - b) / (1 + std::abs(b)); };
    double odd_s = 0, odd_z = 0, even_p = 0, qs = 0, qz = 0, qp = 0, dz = 0, dp = 0, de = 0, pe = 0, pp = 0, pdx = 0;
    const double radius = 0.05 * std::abs(w1);
    for (std::size_t i = 0; i < zs.size(); ++i) {
        const cplx z = zs[i], x = xs[i];
        odd_s = std::max(odd_s, rel(-sigma(-z, lat), sigma(z, lat)));
        odd_z = std::max(odd_z, rel(-zeta(-z, lat), zeta(z, lat)));
        even_p = std::max(even_p, rel(wp(-z, lat), wp(z, lat)));
        for (std::size_t a = 0; a < periods.size(); ++a) {
            const cplx w = periods[a], eta = etas[a];
            // log form avoids overflow of the exponential factor
            const cplx lhs = log_sigma(z + 2.0 * w, lat) - log_sigma(z, lat);
            const cplx rhs = 2.0 * eta * (z + w) + cplx(0, std::numbers::pi);
            const cplx d = lhs - rhs;
            const double wrapped = std::abs(cplx(d.real(), std::remainder(d.imag(), two_pi)));
            qs = std::max(qs, wrapped);
            qz = std::max(qz, rel(zeta(z + 2.0 * w, lat), zeta(z, lat) + 2.0 * eta));
            qp = std::max(qp, rel(wp(z + 2.0 * w, lat), wp(z, lat)));
            pe = std::max(pe, rel(phi(x, z + 2.0 * w, lat), phi(x, z, lat)));
        }
        dz = std::max(dz, rel(-derivative([&](cplx t) { return zeta(t, lat); }, z, radius), wp(z, lat)));
        dp = std::max(dp, rel(derivative([&](cplx t) { return wp(t, lat); }, z, radius), wp_prime(z, lat)));
        if (has2) {
            const cplx p = wp(z, lat), q = wp_prime(z, lat);
            de = std::max(de, rel(q * q, 4.0 * p * p * p - lat.g2() * p - lat.g3()));
        }
        pp = std::max(pp, rel(phi(x, z, lat) * phi(-x, z, lat), wp(z, lat) - wp(x, lat)));
        pdx = std::max(pdx, rel(phi_dx(x, z, lat), derivative([&](cplx t) { return phi(t, z, lat); }, x, radius)));
    }
    r.check("sigma_odd", odd_s, tol, "<");
    r.check("zeta_odd", odd_z, tol, "<");
    r.check("wp_even", even_p, tol, "<");
    if (!periods.empty()) {
        r.check("sigma_quasi_periodic", qs, tol, "<");
        r.check("zeta_quasi_periodic", qz, tol, "<");
        r.check("wp_periodic", qp, tol, "<");
        r.check("phi_elliptic_in_z", pe, tol, "<");
    }
    r.check("wp_equals_minus_zeta_prime", dz, tol, "<");
    r.check("wp_prime_consistent", dp, tol, "<");
    if (has2)
        r.check("wp_differential_equation", de, tol, "<");
    r.check("phi_product", pp, tol, "<");
    r.check("phi_dx_consistent", pdx, tol, "<");

    // Laurent data at z = 0
    const double rho = 0.15 * std::abs(w1);
    auto wpf = [&](cplx z) { return wp(z, lat); };
    double lw = std::abs(laurent(wpf, -2, rho) - 1.0) + std::abs(laurent(wpf, -1, rho)) + std::abs(laurent(wpf, 0, rho));
    if (has2)
        lw += std::abs(laurent(wpf, 2, rho) - lat.g2() / 20.0) + std::abs(laurent(wpf, 4, rho) - lat.g3() / 28.0);
    r.check("wp_laurent_at_zero", lw, tol, "<");
    double lp = 0;
    for (cplx x : xs) {
        // sigma(z - x) / (sigma(z) sigma(x)) = -1/z + zeta(x) + O(z)
        auto h = [&](cplx z) { return phi(x, z, lat) * std::exp(-zeta(z, lat) * x); };
        lp = std::max(lp, std::abs(laurent(h, -1, rho) + 1.0) + rel(laurent(h, 0, rho), zeta(x, lat)));
    }
    r.check("phi_laurent_at_zero", lp, tol, "<");
}

void kirillov_checks(RunReport &r, const OrbitSpec &spec, const SpinMatrix &f, std::uint64_t seed, double tol)
{
    const int n = spec.N;
    CounterRng rng(seed, 0x6b1);
    using Obs = std::function<cplx(const CMatrix &)>;
    using Grad = std::function<CMatrix(const CMatrix &)>;
    std::vector<std::pair<Obs, Grad>> obs;
    for (int k = 0; k < 3; ++k) {
        const CMatrix a = random_matrix(rng, n);
        obs.push_back({[a](const CMatrix &g) { return (a * g).trace(); }, [a](const CMatrix &) -> CMatrix { return a.transpose(); }});
    }
    for (int k = 0; k < 3; ++k) {
        const CMatrix b = random_matrix(rng, n), c = random_matrix(rng, n);
        obs.push_back({[b, c](const CMatrix &g) { return (b * g * c * g).trace(); },
                       [b, c](const CMatrix &g) -> CMatrix { return (c * g * b + b * g * c).transpose(); }});
    }
    auto bracket = [&](std::size_t a, std::size_t b) -> Obs {
        const Grad ga = obs[a].second, gb = obs[b].second;
        return [ga, gb](const CMatrix &g) { return kirillov_bracket(ga(g), gb(g), g); };
    };
    double anti = 0, jac = 0, scale = 1;
    for (std::size_t a = 0; a < obs.size(); ++a)
        for (std::size_t b = a + 1; b < obs.size(); ++b) {
            const cplx ab = bracket(a, b)(f);
            scale = std::max(scale, std::abs(ab));
            anti = std::max(anti, std::abs(ab + bracket(b, a)(f)));
            for (std::size_t c = b + 1; c < obs.size(); ++c) {
                auto outer = [&](const Obs &inner, std::size_t third) {
                    return kirillov_bracket(cauchy_gradient(inner, f), obs[third].second(f), f);
                };
                jac = std::max(jac, std::abs(outer(bracket(a, b), c) + outer(bracket(b, c), a) + outer(bracket(c, a), b)));
            }
        }
    r.check("kirillov_antisymmetry", anti / scale, tol, "<");
    r.check("kirillov_jacobi", jac / scale, tol, "<");

    std::vector<OrbitTangent> basis;
    for (int k = 0; k < n * n; ++k) {
        CMatrix e = CMatrix::Zero(n, n);
        e(k % n, k / n) = 1;
        basis.push_back(make_tangent(f, e));
    }
    CMatrix gram(n * n, n * n);
    for (int a = 0; a < n * n; ++a)
        for (int b = 0; b < n * n; ++b)
            gram(a, b) = kirillov_form(f, basis[a], basis[b]);
    r.check("kirillov_form_rank", numerical_rank(gram), orbit_dimension(spec), "==");

    double agree = 0;
    for (int t = 0; t < 5; ++t) {
        const auto tx = make_tangent(f, random_matrix(rng, n)), ty = make_tangent(f, random_matrix(rng, n));
        const cplx w = kirillov_form(f, tx, ty);
        agree = std::max(agree, std::abs(kirillov_form_eigenbasis(f, tx.U, ty.U) + w) / std::max(1.0, std::abs(w)));
    }
    r.check("kirillov_eigenbasis_agreement", agree, tol, "<");
}

RunReport run_identities(const ExperimentConfig &cfg)
{
    RunReport r = start("identities", cfg);
    require_seed(cfg, "identities");
    const Lattice lat = make_lattice(cfg.model.lattice);
    stage(r, "kernel", [&] { kernel_identity_checks(r, lat, cfg.tolerances.identities); });
    stage(r, "kirillov", [&] {
        const PhasePoint pp = initial_point(cfg);
        kirillov_checks(r, cfg.model.orbit(), pp.f, *cfg.seed, cfg.tolerances.kirillov);
    });
    return r;
}

RunReport run_simulate(const ExperimentConfig &cfg, bool expect_nonintegrable)
{
    RunReport r = start("simulate", cfg);
    const Lattice lat = make_lattice(cfg.model.lattice);
    Trajectory traj;
    stage(r, "integrate", [&] {
        traj = run_flow(initial_point(cfg), cfg, lat);
        r.flag("integration_completed", !traj.failed, traj.failure);
    });
    if (traj.states.empty())
        return r;
    stage(r, "conservation", [&] {
        const auto grid = reference_z_grid(lat, cfg.z_grid_points);
        const ConservationReport c = conservation_report(traj, lat, cfg.model.variant, grid);
        const double tol = cfg.tolerances.conservation;
        r.check("hamiltonian_drift", c.hamiltonian, tol, "<");
        if (expect_nonintegrable) {
            r.check("nonintegrable_char_poly_drift", c.char_poly, cfg.tolerances.nonintegrable_drift, ">");
        } else {
            r.check("diagonal_drift", c.diagonal, tol, "<");
            r.check("spin_eigenvalue_drift", c.spin_eigenvalues, tol, "<");
            r.check("char_poly_drift", c.char_poly, tol, "<");
        }
        Table t{"conservation", {"z_re", "z_im", "char_poly_drift"}, {}};
        for (std::size_t i = 0; i < grid.size(); ++i)
            t.rows.push_back({grid[i].real(), grid[i].imag(), c.char_poly_per_z[i]});
        r.tables.push_back(t);
    });
    Table t{"trajectory", trajectory_columns(cfg.model.N), {}};
    for (std::size_t s = 0; s < traj.states.size(); ++s) {
        const PhasePoint &pp = traj.states[s];
        std::vector<double> row{traj.times[s]};
        for (Eigen::Index i = 0; i < pp.x.size(); ++i)
            push_complex(row, pp.x(i));
        for (Eigen::Index i = 0; i < pp.p.size(); ++i)
            push_complex(row, pp.p(i));
        for (Eigen::Index i = 0; i < pp.f.rows(); ++i)
            for (Eigen::Index j = 0; j < pp.f.cols(); ++j)
                push_complex(row, pp.f(i, j));
        t.rows.push_back(std::move(row));
    }
    r.tables.insert(r.tables.begin(), std::move(t));
    return r;
}

RunReport run_spectral(const ExperimentConfig &cfg)
{
    RunReport r = start("spectral", cfg);
    const Lattice lat = make_lattice(cfg.model.lattice);
    const OrbitSpec spec = cfg.model.orbit();
    const int g = genus(spec.N, spec.l);
    r.constants.emplace_back("genus", double(g));
    // the genus formula against the degree-of-freedom count 2g = 2 + dim(orbit)
    r.check("genus_formula", 2 * g, 2 + orbit_dimension(spec), "==");
    const PhasePoint pp = initial_point(cfg);

    stage(r, "curve", [&] {
        const auto grid = reference_z_grid(lat, cfg.z_grid_points);
        const SpectralCurve c = sample_curve(pp, lat, grid);
        std::vector<std::string> cols{"z_re", "z_im"};
        for (std::size_t j = 0; j < c.coeff_samples.front().size(); ++j) {
            cols.push_back("r" + std::to_string(j) + "_re");
            cols.push_back("r" + std::to_string(j) + "_im");
        }
        Table t{"curve_samples", cols, {}};
        for (std::size_t m = 0; m < grid.size(); ++m) {
            std::vector<double> row{grid[m].real(), grid[m].imag()};
            for (cplx v : c.coeff_samples[m])
                push_complex(row, v);
            t.rows.push_back(std::move(row));
        }
        r.tables.push_back(std::move(t));
    });

    if (lat.kind() == LatticeKind::elliptic)
        stage(r, "branch_points", [&] {
            const auto bps = branch_points(pp, lat);
            r.check("branch_point_count", double(bps.size()), 2 * g - 2, "==");
            Table t{"branch_points", {"z_re", "z_im", "k_re", "k_im", "multiplicity", "residual"}, {}};
            for (const auto &b : bps)
                t.rows.push_back({b.z.real(), b.z.imag(), b.k.real(), b.k.imag(), double(b.multiplicity), b.residual});
            r.tables.push_back(std::move(t));
        });

    stage(r, "z0_limits", [&] {
        const auto limits = z0_asymptotics(pp, lat);
        std::vector<cplx> expected;
        for (cplx lam : spec.lambdas)
            expected.push_back(lam / 2.0 - 1.0);
        for (int i = spec.l; i < spec.N; ++i)
            expected.push_back(-1.0);
        r.check("z0_limits", multiset_distance(limits, expected), cfg.tolerances.asymptotics, "<");
        Table t{"z0_limits", {"sheet", "limit_re", "limit_im"}, {}};
        for (std::size_t a = 0; a < limits.size(); ++a)
            t.rows.push_back({double(a), limits[a].real(), limits[a].imag()});
        r.tables.push_back(std::move(t));
    });

    stage(r, "integrals_rank", [&] {
        const RankAudit a = independent_integrals_rank(pp, lat, reference_z_grid(lat, cfg.z_grid_points));
        const RankAudit b = independent_integrals_rank(pp, lat, reference_z_grid(lat, cfg.z_grid_resample));
        r.check("integrals_rank", a.rank, g, "==", "gap " + fmt(a.gap));
        r.check("integrals_rank_resampled", b.rank, g, "==", "gap " + fmt(b.gap));
    });
    return r;
}

RunReport run_divisor(const ExperimentConfig &cfg)
{
    RunReport r = start("divisor", cfg);
    require_elliptic(cfg, "divisor");
    const Lattice lat = make_lattice(cfg.model.lattice);
    const PhasePoint pp = initial_point(cfg);
    stage(r, "divisor", [&] {
        const DivisorSearch d = divisor(pp, lat);
        r.check("divisor_count", double(d.points.size()), d.expected, "==");
        r.check("adjoint_divisor_count", double(d.adjoint_points.size()), d.expected, "==");
        double worst = 0;
        Table t{"divisor", {"kind", "z_re", "z_im", "k_re", "k_im", "sheet", "residual", "curve_residual"}, {}};
        for (int kind = 0; kind < 2; ++kind)
            for (const auto &p : kind == 0 ? d.points : d.adjoint_points) {
                worst = std::max({worst, p.residual, p.curve_residual});
                t.rows.push_back({double(kind), p.z.real(), p.z.imag(), p.k.real(), p.k.imag(), double(p.sheet),
                                  p.residual, p.curve_residual});
            }
        r.check("divisor_residual", worst, 1e-8, "<");
        r.tables.push_back(std::move(t));
    });
    return r;
}

RunReport run_darboux(const ExperimentConfig &cfg)
{
    RunReport r = start("darboux-check", cfg);
    require_elliptic(cfg, "darboux-check");
    require_seed(cfg, "darboux-check");
    const Lattice lat = make_lattice(cfg.model.lattice);
    const Tolerances &tol = cfg.tolerances;
    Table t{"darboux",
            {"point", "max_zz", "max_kk", "max_kz_offdiagonal", "kz_diagonal_spread", "kz_re", "kz_im", "c_hat_re",
             "c_hat_im", "fit_residual"},
            {}};
    std::vector<cplx> kz, fits;
    double zz = 0, kk = 0, off = 0, spread = 0, resid = 0;
    for (int i = 0; i < cfg.phase_points; ++i)
        stage(r, "point" + std::to_string(i), [&] {
            const PhasePoint pp = initial_point(cfg, std::uint64_t(i));
            const DivisorGradients g = divisor_gradients(pp, lat, cfg.fd_step);
            const BracketMatrix b = bracket_matrix(g, pp.f);
            const ReducedFormFit fit = reduced_form_fit(g, pp, cfg.fit_trials, *cfg.seed + std::uint64_t(i));
            zz = std::max(zz, b.max_zz());
            kk = std::max(kk, b.max_kk());
            off = std::max(off, b.max_kz_offdiagonal());
            spread = std::max(spread, b.kz_diagonal_spread());
            resid = std::max(resid, fit.residual);
            kz.push_back(b.kz_mean());
            fits.push_back(fit.c_hat);
            t.rows.push_back({double(i), b.max_zz(), b.max_kk(), b.max_kz_offdiagonal(), b.kz_diagonal_spread(),
                              b.kz_mean().real(), b.kz_mean().imag(), fit.c_hat.real(), fit.c_hat.imag(), fit.residual});
        });
    r.tables.push_back(std::move(t));
    if (fits.empty())
        return r;
    r.check("zz_max", zz, tol.bracket, "<");
    r.check("kk_max", kk, tol.bracket, "<");
    r.check("kz_offdiagonal_max", off, tol.bracket, "<");
    r.check("kz_diagonal_spread", spread, tol.c_hat_spread, "<");
    double across = 0;
    cplx mean_fit = 0, mean_kz = 0;
    for (std::size_t i = 0; i < fits.size(); ++i) {
        across = std::max({across, std::abs(fits[i] - fits[0]) / std::abs(fits[0]), std::abs(kz[i] - kz[0]) / std::abs(kz[0])});
        mean_fit += fits[i] / double(fits.size());
        mean_kz += kz[i] / double(kz.size());
    }
    r.check("c_hat_spread", across, tol.c_hat_spread, "<");
    r.check("fit_residual", resid, tol.fit_residual, "<");
    r.check("bracket_fit_consistency", std::abs(mean_kz * mean_fit - 1.0), tol.c_hat_spread, "<",
            "{k,z} * c_hat should be 1");
    r.constants.emplace_back("c_hat", mean_fit);
    r.constants.emplace_back("kz_bracket", mean_kz);
    const double nearest = std::round(std::abs(mean_fit));
    r.notes.push_back("c_hat = " + fmt(mean_fit) + ", nearest integer " + std::to_string(int(nearest)) +
                      (nearest == 1 || nearest == 2 ? "" : " (neither 1 nor 2)"));
    return r;
}

RunReport run_actions(const ExperimentConfig &cfg)
{
    RunReport r = start("actions", cfg);
    require_elliptic(cfg, "actions");
    require_seed(cfg, "actions");
    const Lattice lat = make_lattice(cfg.model.lattice);
    const Tolerances &tol = cfg.tolerances;
    const PhasePoint pp = initial_point(cfg);
    HolomorphicBasis basis;
    bool have_basis = false;
    stage(r, "basis", [&] {
        basis = holomorphic_basis(pp, lat);
        have_basis = true;
        r.check("basis_dimension", double(basis.raw.rows()), basis.genus, "==");
        const double norm = (basis.normalization - CMatrix::Identity(basis.genus, basis.genus)).cwiseAbs().maxCoeff();
        r.check("normalization_residual", norm, tol.normalization, "<");
        if (!basis.supported)
            r.notes.push_back("action and angle bounds are calibrated for N = 2, l = 1");
        const CVector u = translation_vector(basis);
        for (Eigen::Index k = 0; k < u.size(); ++k)
            r.constants.emplace_back("translation_u" + std::to_string(k + 1), u(k));
        for (const auto &c : basis.cycles)
            r.notes.push_back("A-cycle " + c.label);
    });
    if (!have_basis)
        return r;

    Trajectory traj;
    stage(r, "integrate", [&] {
        traj = run_flow(pp, cfg, lat);
        r.flag("integration_completed", !traj.failed, traj.failure);
    });
    if (traj.failed)
        return r;
    stage(r, "actions", [&] {
        const ActionSeries as = action_series(traj, lat, basis.cycles);
        r.check("action_drift", as.max_drift, tol.action_drift, "<", "quadrature error " + fmt(as.max_error));
        Table t{"actions", {"t"}, {}};
        const auto cols = complex_columns("a", basis.genus);
        t.columns.insert(t.columns.end(), cols.begin(), cols.end());
        for (std::size_t s = 0; s < as.times.size(); ++s) {
            std::vector<double> row{as.times[s]};
            for (Eigen::Index c = 0; c < as.actions[s].size(); ++c)
                push_complex(row, as.actions[s](c));
            t.rows.push_back(std::move(row));
        }
        r.tables.push_back(std::move(t));
    });
    auto theta_table = [&](const std::string &name, const LinearFlowReport &lf) {
        Table t{name, {"t"}, {}};
        const auto cols = complex_columns("theta", int(lf.theta.front().size()));
        t.columns.insert(t.columns.end(), cols.begin(), cols.end());
        for (std::size_t s = 0; s < lf.times.size(); ++s) {
            std::vector<double> row{lf.times[s]};
            for (Eigen::Index c = 0; c < lf.theta[s].size(); ++c)
                push_complex(row, lf.theta[s](c));
            t.rows.push_back(std::move(row));
        }
        r.tables.push_back(std::move(t));
    };
    stage(r, "linear_flow", [&] {
        const LinearFlowReport lf = linear_flow_check(traj, basis);
        r.check("linear_flow_ratio", lf.ratio, tol.linear_flow, "<", "first difference " + fmt(lf.max_first_difference));
        theta_table("theta", lf);
    });
    stage(r, "negative_control", [&] {
        ExperimentConfig broken = cfg;
        OrbitSpec spec = cfg.model.orbit();
        broken.model.diagonal_values = spec.diagonal_targets();
        broken.model.diagonal_values.back() += cfg.control_diagonal_shift;
        broken.model.lambdas = spec.lambdas;
        broken.model.lambdas.back() += cfg.control_diagonal_shift;
        broken.initial.mode = "seeded";
        const PhasePoint pb = initial_point(broken);
        const Trajectory tb = run_flow(pb, broken, lat);
        if (tb.failed)
            throw ConvergenceError("negative control integration failed: " + tb.failure);
        const LinearFlowReport lf = linear_flow_check(tb, holomorphic_basis(pb, lat));
        r.check("negative_control", lf.ratio / tol.linear_flow, tol.negative_control_factor, ">",
                "control ratio " + fmt(lf.ratio) + " against bound " + fmt(tol.linear_flow));
        theta_table("control_theta", lf);
    });
    return r;
}

RunReport run_audit(int N, int l)
{
    RunReport r;
    r.command = "audit";
    const DofAudit a = dof_audit(N, l);
    r.constants.emplace_back("genus", double(a.two_g / 2));
    r.constants.emplace_back("orbit_dim", double(a.orbit));
    r.constants.emplace_back("particle", double(a.particle));
    r.constants.emplace_back("reduction", double(a.reduction));
    r.constants.emplace_back("total", double(a.total));
    r.check("dof_total_equals_2g", a.total, a.two_g, "==");
    Table t{"audit", {"N", "l", "particle", "orbit", "reduction", "total", "two_g", "equal"}, {}};
    t.rows.push_back({double(N), double(l), double(a.particle), double(a.orbit), double(a.reduction), double(a.total),
                      double(a.two_g), a.equal ? 1.0 : 0.0});
    r.tables.push_back(std::move(t));
    return r;
}

} // namespace spincal
