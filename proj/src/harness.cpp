#include "spincal/errors.hpp"
#include "spincal/harness.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <ostream>

namespace spincal {

namespace {

struct CommonOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    double tol_scale = 1.0;
    bool expect_nonintegrable = false;
    std::optional<int> N, l;
    bool quiet = false;
};

void add_common(CLI::App *sub, CommonOptions &o)
{
    sub->add_option("--config", o.config, "JSON experiment config (see schema/config.schema.json)");
    sub->add_option("--seed", o.seed, "seed for the counter-based generator, overrides the config");
    sub->add_option("--out", o.out, "output directory for report.json, timings.json and CSV tables");
    sub->add_option("--tol-scale", o.tol_scale, "multiply upper-bound tolerances (divide lower bounds)");
    sub->add_flag("--quiet", o.quiet, "print only the summary line");
}

std::string number(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

void print_report(const RunReport &r, std::ostream &out, bool quiet)
{
    if (!quiet) {
        for (const auto &c : r.checks) {
            out << (c.passed ? "PASS " : "FAIL ") << c.name;
            if (!c.relation.empty())
                out << " " << number(c.value) << " " << c.relation << " " << number(c.threshold);
            if (!c.detail.empty())
                out << " (" << c.detail << ")";
            out << "\n";
        }
        for (const auto &[k, v] : r.constants) {
            out << k << " = " << number(v.real());
            if (v.imag() != 0)
                out << (v.imag() < 0 ? " - " : " + ") << number(std::abs(v.imag())) << "i";
            out << "\n";
        }
        for (const auto &n : r.notes)
            out << "note: " << n << "\n";
    }
    std::size_t failed = 0;
    for (const auto &c : r.checks)
        failed += !c.passed;
    out << r.command << ": " << (r.checks.size() - failed) << "/" << r.checks.size() << " checks passed, config "
        << r.config_hash << "\n";
}

void print_audit(const DofAudit &a, int N, int l, std::ostream &out)
{
    out << "genus=" << a.two_g / 2 << " orbit_dim=" << a.orbit << "\n";
    out << "dof audit: 2N + (2Nl-l^2-l) - 2(N-1) = " << a.particle << " + " << a.orbit << " - " << -a.reduction
        << " = " << a.total << (a.equal ? " = " : " != ") << "2g = " << a.two_g << " (N=" << N << ", l=" << l << ")\n";
}

} // namespace

int run_command(const std::vector<std::string> &args, std::ostream &out, std::ostream &err)
{
    CLI::App app{"spincal: elliptic spin Calogero numerical laboratory", "spincal"};
    app.set_version_flag("--version", version());
    app.require_subcommand(1, 1);
    CommonOptions o;
    const std::pair<const char *, const char *> commands[] = {
        {"identities", "elliptic kernel and Kirillov bracket identity checks"},
        {"simulate", "integrate the flow and audit conserved quantities"},
        {"spectral", "spectral curve: genus, branch points, z -> 0 limits, integral count"},
        {"divisor", "separation points where the first eigenvector component vanishes"},
        {"darboux-check", "bracket matrices of (z_i, k_i) and the reduced symplectic form fit"},
        {"actions", "holomorphic basis, actions along the flow, linearity of the Abel image"},
        {"audit", "degree-of-freedom count 2N + dim(orbit) - 2(N-1) = 2g"}};
    std::vector<CLI::App *> subs;
    for (const auto &[name, help] : commands) {
        CLI::App *s = app.add_subcommand(name, help);
        add_common(s, o);
        subs.push_back(s);
    }
    app.get_subcommand("simulate")
        ->add_flag("--expect-nonintegrable", o.expect_nonintegrable,
                   "pass only when the spectral drift exceeds the nonintegrable threshold");
    app.get_subcommand("audit")->add_option("--N", o.N, "number of particles");
    app.get_subcommand("audit")->add_option("--l", o.l, "rank of the spin matrix");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp &) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForVersion &) {
        out << version() << "\n";
        return 0;
    } catch (const CLI::ParseError &e) {
        err << "spincal: " << e.what() << "\n";
        return 2;
    }
    const std::string command = app.get_subcommands().front()->get_name();

    ExperimentConfig cfg;
    try {
        if (!o.config.empty())
            cfg = load_config(o.config);
        if (o.seed)
            cfg.seed = o.seed;
        if (!o.out.empty())
            cfg.output_dir = o.out;
        if (o.tol_scale != 1.0)
            cfg.scale_tolerances(o.tol_scale);
        if (o.N)
            cfg.model.N = *o.N;
        if (o.l)
            cfg.model.l = *o.l;
        if (o.N || o.l)
            cfg.model.lambdas.clear();

        RunReport r;
        if (command == "audit") {
            const DofAudit a = dof_audit(cfg.model.N, cfg.model.l);
            print_audit(a, cfg.model.N, cfg.model.l, out);
            r = run_audit(cfg.model.N, cfg.model.l);
            cfg.validate();
            r.config_hash = config_hash(cfg);
        } else if (command == "identities") {
            r = run_identities(cfg);
        } else if (command == "simulate") {
            r = run_simulate(cfg, o.expect_nonintegrable);
        } else if (command == "spectral") {
            r = run_spectral(cfg);
        } else if (command == "divisor") {
            r = run_divisor(cfg);
        } else if (command == "darboux-check") {
            r = run_darboux(cfg);
        } else {
            r = run_actions(cfg);
        }
        print_report(r, out, o.quiet);
        if (!cfg.output_dir.empty())
            write_outputs(r, cfg, cfg.output_dir);
        return r.passed() ? 0 : 1;
    } catch (const ConfigError &e) {
        err << "spincal: configuration error: " << e.what() << "\n";
        return 2;
    } catch (const Error &e) {
        err << "spincal " << command << ": " << e.what() << "\n";
        return 1;
    }
}

} // namespace spincal
