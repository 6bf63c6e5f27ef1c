// Acceptance driver: one PASS/FAIL line per criterion. Exit status 1 if any criterion fails.
#include "spincal/errors.hpp"
#include "spincal/harness.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

using namespace spincal;

namespace {

struct Case {
    int N, l;
    std::vector<cplx> lambdas;
    std::uint64_t seed;
};

const std::vector<Case> cases = {{2, 1, {4.0}, 3}, {3, 1, {6.0}, 3}, {3, 2, {2.0, 4.0}, 3}};

ExperimentConfig config_for(const Case &c)
{
    ExperimentConfig cfg;
    cfg.model.N = c.N;
    cfg.model.l = c.l;
    cfg.model.lambdas = c.lambdas;
    cfg.seed = c.seed;
    return cfg;
}

std::string label(const Case &c) { return "(" + std::to_string(c.N) + "," + std::to_string(c.l) + ")"; }

std::string sci(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2e", v);
    return buf;
}

// Collects failed checks of a report into a short reason.
struct Verdict {
    bool pass = true;
    std::vector<std::string> facts;
    std::vector<std::string> failures;

    void take(const RunReport &r, const std::string &prefix, const std::vector<std::string> &names = {})
    {
        for (const auto &c : r.checks) {
            if (!names.empty() && std::find(names.begin(), names.end(), c.name) == names.end() &&
                c.name.rfind("stage:", 0) != 0)
                continue;
            if (!c.passed) {
                pass = false;
                failures.push_back(prefix + " " + c.name + (c.relation.empty() ? "" : " " + sci(c.value) + " " + c.relation + " " + sci(c.threshold)) +
                                   (c.detail.empty() ? "" : " [" + c.detail + "]"));
            }
        }
    }
    void require(bool ok, const std::string &what)
    {
        if (!ok) {
            pass = false;
            failures.push_back(what);
        }
    }
};

double worst(const RunReport &r, const std::string &name)
{
    const CheckResult *c = r.find(name);
    return c ? c->value : std::nan("");
}

int failures = 0;

void criterion(int id, const std::string &title, const std::function<Verdict()> &body)
{
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
        v = body();
    } catch (const std::exception &e) {
        v.pass = false;
        v.failures.push_back(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failures += !v.pass;
    std::string line = std::string(v.pass ? "PASS" : "FAIL") + " criterion " + std::to_string(id) + " " + title + ":";
    for (std::size_t i = 0; i < v.facts.size(); ++i)
        line += (i ? "; " : " ") + v.facts[i];
    for (const auto &f : v.failures)
        line += " | failed: " + f;
    std::printf("%s (%.1f s)\n", line.c_str(), secs);
    std::fflush(stdout);
}

std::string file_digest(const std::filesystem::path &dir)
{
    std::string acc;
    std::vector<std::filesystem::path> files;
    for (const auto &e : std::filesystem::directory_iterator(dir))
        if (e.path().filename() != "timings.json")
            files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto &f : files) {
        std::ifstream in(f, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        char buf[40];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(ss.str())));
        acc += f.filename().string() + ":" + buf + " ";
    }
    return acc;
}

} // namespace

int main()
{
    criterion(1, "elliptic kernel identities", [] {
        Verdict v;
        double w = 0;
        int n = 0;
        for (const Lattice &lat : {Lattice::elliptic(1.0, cplx(0.3, 1.1)), Lattice::elliptic(cplx(0.8, 0.1), cplx(-0.2, 1.3)),
                                   Lattice::trigonometric(1.0)}) {
            RunReport r;
            kernel_identity_checks(r, lat, 1e-9);
            v.take(r, "lattice");
            for (const auto &c : r.checks)
                w = std::max(w, c.value);
            n += int(r.checks.size());
        }
        v.facts.push_back(std::to_string(n) + " checks on 3 lattices, worst " + sci(w) + " < 1e-9");
        return v;
    });

    criterion(2, "Kirillov bracket suite", [] {
        Verdict v;
        double w = 0;
        for (const Case &c : cases) {
            const ExperimentConfig cfg = config_for(c);
            RunReport r;
            kirillov_checks(r, cfg.model.orbit(), initial_point(cfg).f, *cfg.seed, 1e-9);
            v.take(r, label(c));
            for (const char *name : {"kirillov_antisymmetry", "kirillov_jacobi", "kirillov_eigenbasis_agreement"})
                w = std::max(w, worst(r, name));
            v.facts.push_back(label(c) + " rank " + std::to_string(int(worst(r, "kirillov_form_rank"))) + " = " +
                              std::to_string(orbit_dimension(cfg.model.orbit())));
        }
        v.facts.push_back("antisymmetry/Jacobi/eigenbasis worst " + sci(w) + " < 1e-9");
        return v;
    });

    criterion(3, "conservation over T=10", [] {
        Verdict v;
        double w = 0;
        for (const Case &c : cases) {
            const RunReport r = run_simulate(config_for(c), false);
            v.take(r, label(c));
            for (const char *name : {"hamiltonian_drift", "diagonal_drift", "spin_eigenvalue_drift", "char_poly_drift"})
                w = std::max(w, worst(r, name));
        }
        v.facts.push_back("worst drift " + sci(w) + " < 1e-7");
        ExperimentConfig broken = config_for({3, 1, {6.5}, 3});
        broken.model.diagonal_values = {2.0, 2.0, 2.5};
        const RunReport rb = run_simulate(broken, true);
        v.take(rb, "unequal f_ii control");
        v.facts.push_back("unequal f_ii control spectral drift " + sci(worst(rb, "nonintegrable_char_poly_drift")) + " > 1e-3");
        return v;
    });

    std::vector<RunReport> spectral;
    for (const Case &c : cases)
        spectral.push_back(run_spectral(config_for(c)));

    criterion(4, "curve structure", [&] {
        Verdict v;
        const int want[] = {2, 3, 4};
        double w = 0;
        for (std::size_t i = 0; i < cases.size(); ++i) {
            const Case &c = cases[i];
            const int g = genus(c.N, c.l);
            v.require(g == want[i], label(c) + " genus " + std::to_string(g));
            v.take(spectral[i], label(c), {"genus_formula", "branch_point_count", "z0_limits"});
            w = std::max(w, worst(spectral[i], "z0_limits"));
            v.facts.push_back(label(c) + " g=" + std::to_string(g) + " branch points " +
                              std::to_string(int(worst(spectral[i], "branch_point_count"))) + "/" + std::to_string(2 * g - 2));
        }
        v.facts.push_back("z->0 limits of kz within " + sci(w) + " < 1e-6");
        return v;
    });

    criterion(5, "independent integral count", [&] {
        Verdict v;
        for (std::size_t i = 0; i < cases.size(); ++i) {
            v.take(spectral[i], label(cases[i]), {"integrals_rank", "integrals_rank_resampled"});
            v.facts.push_back(label(cases[i]) + " rank " + std::to_string(int(worst(spectral[i], "integrals_rank"))) + "/" +
                              std::to_string(int(worst(spectral[i], "integrals_rank_resampled"))) + " (resampled) = g");
        }
        return v;
    });

    criterion(6, "divisor and Darboux structure", [] {
        Verdict v;
        for (const Case &c : {cases[0], cases[1]}) {
            const ExperimentConfig cfg = config_for(c);
            const RunReport d = run_divisor(cfg);
            v.take(d, label(c));
            const RunReport r = run_darboux(cfg);
            v.take(r, label(c));
            cplx c_hat = 0;
            for (const auto &[k, val] : r.constants)
                if (k == "c_hat")
                    c_hat = val;
            v.facts.push_back(label(c) + " g-1=" + std::to_string(int(worst(d, "divisor_count"))) + " ZZ " +
                              sci(worst(r, "zz_max")) + " KK " + sci(worst(r, "kk_max")) + " KZ off " +
                              sci(worst(r, "kz_offdiagonal_max")) + " spread " + sci(worst(r, "c_hat_spread")) + " fit " +
                              sci(worst(r, "fit_residual")) + " c_hat=" + sci(c_hat.real()));
        }
        v.facts.push_back("c_hat = 2 (the canonical pairs are (z_i, 2k_i))");
        return v;
    });

    criterion(7, "actions and angles for (2,1)", [] {
        Verdict v;
        const RunReport r = run_actions(config_for(cases[0]));
        v.take(r, "(2,1)");
        v.facts.push_back("basis dim " + std::to_string(int(worst(r, "basis_dimension"))) + ", normalization " +
                          sci(worst(r, "normalization_residual")) + ", action drift " + sci(worst(r, "action_drift")) +
                          ", flow ratio " + sci(worst(r, "linear_flow_ratio")) + ", control/bound " +
                          sci(worst(r, "negative_control")) + " (needs > 10)");
        return v;
    });

    criterion(8, "degree-of-freedom audit", [] {
        Verdict v;
        for (auto [N, l] : {std::pair{2, 1}, {3, 1}, {3, 2}, {4, 2}}) {
            const DofAudit a = dof_audit(N, l);
            v.require(a.equal && a.particle + a.orbit + a.reduction == a.two_g,
                      "(" + std::to_string(N) + "," + std::to_string(l) + ")");
            v.facts.push_back("(" + std::to_string(N) + "," + std::to_string(l) + ") " + std::to_string(a.particle) + "+" +
                              std::to_string(a.orbit) + "-" + std::to_string(-a.reduction) + "=" + std::to_string(a.total) +
                              "=2g");
        }
        return v;
    });

    criterion(9, "determinism", [] {
        Verdict v;
        namespace fs = std::filesystem;
        const fs::path base = fs::temp_directory_path() / "spincal_acceptance";
        fs::remove_all(base);
        std::string digests[2];
        for (int run = 0; run < 2; ++run) {
            const fs::path dir = base / ("run" + std::to_string(run));
            ExperimentConfig cfg = config_for(cases[1]);
            cfg.integrator.T = 2.0;
            write_outputs(run_simulate(cfg, false), cfg, (dir / "simulate").string());
            write_outputs(run_darboux(cfg), cfg, (dir / "darboux").string());
            digests[run] = file_digest(dir / "simulate") + file_digest(dir / "darboux");
        }
        v.require(digests[0] == digests[1], "output hashes differ");
        v.facts.push_back("simulate and darboux-check outputs identical across two runs (FNV-1a per file)");
        fs::remove_all(base);
        return v;
    });

    std::printf("%d of 9 criteria failed\n", failures);
    return failures ? 1 : 0;
}
