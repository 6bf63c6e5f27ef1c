#include "spincal/errors.hpp"
#include "spincal/harness.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace spincal {

using nlohmann::json;

const char *version() { return "0.1.0"; }

namespace {

[[noreturn]] void fail(const std::string &where, const std::string &what)
{
    throw ConfigError("config: " + where + ": " + what);
}

void only_keys(const json &obj, const std::string &where, std::initializer_list<const char *> allowed)
{
    if (!obj.is_object())
        fail(where, "expected an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto &[key, value] : obj.items())
        if (!ok.count(key))
            fail(where, "unknown key '" + key + "'");
}

double number(const json &v, const std::string &where)
{
    if (!v.is_number())
        fail(where, "expected a number");
    return v.get<double>();
}

int integer(const json &v, const std::string &where)
{
    if (!v.is_number_integer())
        fail(where, "expected an integer");
    return v.get<int>();
}

// A complex number is a JSON number or a [re, im] pair.
cplx complex_value(const json &v, const std::string &where)
{
    if (v.is_number())
        return v.get<double>();
    if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number())
        return {v[0].get<double>(), v[1].get<double>()};
    fail(where, "expected a number or [re, im]");
}

std::vector<cplx> complex_list(const json &v, const std::string &where)
{
    if (!v.is_array())
        fail(where, "expected an array");
    std::vector<cplx> out;
    for (std::size_t i = 0; i < v.size(); ++i)
        out.push_back(complex_value(v[i], where + "[" + std::to_string(i) + "]"));
    return out;
}

json complex_json(cplx z) { return json::array({z.real(), z.imag()}); }

json complex_list_json(const std::vector<cplx> &v)
{
    json a = json::array();
    for (cplx z : v)
        a.push_back(complex_json(z));
    return a;
}

template <class F>
void maybe(const json &obj, const char *key, F &&f)
{
    if (obj.contains(key))
        f(obj.at(key));
}

json config_json(const ExperimentConfig &c)
{
    json lattice = {{"kind", c.model.lattice.kind},
                    {"omega1", complex_json(c.model.lattice.omega1)},
                    {"omega2", complex_json(c.model.lattice.omega2)}};
    json model = {{"N", c.model.N},
                  {"l", c.model.l},
                  {"lambdas", complex_list_json(c.model.orbit().lambdas)},
                  {"diagonal", c.model.diagonal},
                  {"diagonal_values", c.model.diagonal_values},
                  {"variant", c.model.variant == Variant::elliptic ? "elliptic" : "rational"},
                  {"lattice", lattice}};
    json initial = {{"mode", c.initial.mode}};
    if (c.initial.mode == "explicit") {
        initial["x"] = complex_list_json(c.initial.x);
        initial["p"] = complex_list_json(c.initial.p);
        json f = json::array();
        for (Eigen::Index i = 0; i < c.initial.f.rows(); ++i) {
            json row = json::array();
            for (Eigen::Index j = 0; j < c.initial.f.cols(); ++j)
                row.push_back(complex_json(c.initial.f(i, j)));
            f.push_back(row);
        }
        initial["f"] = f;
    } else {
        initial["layout"] = {{"spacing", c.initial.layout.spacing},
                             {"direction", complex_json(c.initial.layout.direction)},
                             {"jitter", c.initial.layout.jitter},
                             {"momentum_scale", c.initial.layout.momentum_scale}};
    }
    const Tolerances &t = c.tolerances;
    json tol = {{"identities", t.identities},
                {"kirillov", t.kirillov},
                {"conservation", t.conservation},
                {"nonintegrable_drift", t.nonintegrable_drift},
                {"asymptotics", t.asymptotics},
                {"bracket", t.bracket},
                {"c_hat_spread", t.c_hat_spread},
                {"fit_residual", t.fit_residual},
                {"action_drift", t.action_drift},
                {"normalization", t.normalization},
                {"linear_flow", t.linear_flow},
                {"negative_control_factor", t.negative_control_factor}};
    json j = {{"model", model},
              {"initial", initial},
              {"integrator",
               {{"T", c.integrator.T},
                {"samples", c.integrator.samples},
                {"rtol", c.integrator.rtol},
                {"atol", c.integrator.atol}}},
              {"tolerances", tol},
              {"z_grid", {{"points", c.z_grid_points}, {"resample_points", c.z_grid_resample}}},
              {"sampling",
               {{"phase_points", c.phase_points},
                {"fit_trials", c.fit_trials},
                {"fd_step", c.fd_step},
                {"control_diagonal_shift", c.control_diagonal_shift}}}};
    if (c.seed)
        j["seed"] = *c.seed;
    return j;
}

std::string hex64(std::uint64_t v)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

} // namespace

OrbitSpec ModelConfig::orbit() const
{
    OrbitSpec s;
    s.N = N;
    s.l = l;
    s.diagonal = diagonal;
    s.diagonal_values = diagonal_values;
    if (!lambdas.empty()) {
        s.lambdas = lambdas;
    } else {
        double trace = 0;
        for (double d : s.diagonal_targets())
            trace += d;
        s.lambdas.clear();
        const double weight = l * (l + 1) / 2.0;
        for (int a = 1; a <= l; ++a)
            s.lambdas.push_back(trace * a / weight);
    }
    return s;
}

void ExperimentConfig::validate() const
{
    if (model.lattice.kind != "elliptic" && model.lattice.kind != "trigonometric" && model.lattice.kind != "rational")
        fail("model.lattice.kind", "must be elliptic, trigonometric or rational");
    if (model.N < 2 || model.N > 8)
        fail("model.N", "must be between 2 and 8");
    model.orbit().validate();
    if (model.variant == Variant::elliptic && model.lattice.kind == "rational")
        fail("model.variant", "elliptic variant needs an elliptic or trigonometric lattice");
    if (model.variant == Variant::rational && model.lattice.kind != "rational")
        fail("model.variant", "rational variant needs the rational lattice");
    if (initial.mode != "seeded" && initial.mode != "explicit")
        fail("initial.mode", "must be seeded or explicit");
    if (initial.mode == "seeded" && !seed)
        fail("seed", "required for seeded initial conditions");
    if (initial.mode == "explicit") {
        const int n = model.N;
        if (int(initial.x.size()) != n || int(initial.p.size()) != n || initial.f.rows() != n || initial.f.cols() != n)
            fail("initial", "explicit x, p, f must match N");
    }
    if (!(integrator.T > 0) || integrator.samples < 2 || !(integrator.rtol > 0) || !(integrator.atol > 0))
        fail("integrator", "T, rtol, atol must be positive and samples >= 2");
    const Tolerances &t = tolerances;
    for (double v : {t.identities, t.kirillov, t.conservation, t.nonintegrable_drift, t.asymptotics, t.bracket,
                     t.c_hat_spread, t.fit_residual, t.action_drift, t.normalization, t.linear_flow,
                     t.negative_control_factor})
        if (!(v > 0) || !std::isfinite(v))
            fail("tolerances", "every tolerance must be positive and finite");
    if (z_grid_points < 1 || z_grid_resample < 1)
        fail("z_grid", "point counts must be positive");
    if (phase_points < 1 || fit_trials < 1 || !(fd_step > 0))
        fail("sampling", "phase_points, fit_trials and fd_step must be positive");
    if (phase_points > 1 && !seed)
        fail("seed", "required when sampling several phase points");
}

void ExperimentConfig::scale_tolerances(double factor)
{
    if (!(factor > 0) || !std::isfinite(factor))
        fail("--tol-scale", "must be positive");
    Tolerances &t = tolerances;
    for (double *v : {&t.identities, &t.kirillov, &t.conservation, &t.asymptotics, &t.bracket, &t.c_hat_spread,
                      &t.fit_residual, &t.action_drift, &t.normalization, &t.linear_flow})
        *v *= factor;
    t.nonintegrable_drift /= factor;
    t.negative_control_factor /= factor;
}

ExperimentConfig parse_config(std::string_view text)
{
    json j;
    try {
        j = json::parse(text.begin(), text.end());
    } catch (const json::parse_error &e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    ExperimentConfig c;
    c.seed.reset();
    only_keys(j, "root", {"model", "initial", "integrator", "tolerances", "z_grid", "sampling", "output", "seed"});

    maybe(j, "model", [&](const json &m) {
        only_keys(m, "model", {"N", "l", "lambdas", "diagonal", "diagonal_values", "variant", "lattice"});
        maybe(m, "N", [&](const json &v) { c.model.N = integer(v, "model.N"); });
        maybe(m, "l", [&](const json &v) { c.model.l = integer(v, "model.l"); });
        maybe(m, "lambdas", [&](const json &v) { c.model.lambdas = complex_list(v, "model.lambdas"); });
        maybe(m, "diagonal", [&](const json &v) { c.model.diagonal = number(v, "model.diagonal"); });
        maybe(m, "diagonal_values", [&](const json &v) {
            if (!v.is_array())
                fail("model.diagonal_values", "expected an array");
            c.model.diagonal_values.clear();
            for (const auto &e : v)
                c.model.diagonal_values.push_back(number(e, "model.diagonal_values"));
        });
        maybe(m, "variant", [&](const json &v) {
            const std::string s = v.is_string() ? v.get<std::string>() : "";
            if (s == "elliptic")
                c.model.variant = Variant::elliptic;
            else if (s == "rational")
                c.model.variant = Variant::rational;
            else
                fail("model.variant", "must be elliptic or rational");
        });
        maybe(m, "lattice", [&](const json &lat) {
            only_keys(lat, "model.lattice", {"kind", "omega1", "omega2"});
            maybe(lat, "kind", [&](const json &v) {
                if (!v.is_string())
                    fail("model.lattice.kind", "expected a string");
                c.model.lattice.kind = v.get<std::string>();
            });
            maybe(lat, "omega1", [&](const json &v) { c.model.lattice.omega1 = complex_value(v, "model.lattice.omega1"); });
            maybe(lat, "omega2", [&](const json &v) { c.model.lattice.omega2 = complex_value(v, "model.lattice.omega2"); });
        });
    });

    maybe(j, "initial", [&](const json &in) {
        only_keys(in, "initial", {"mode", "layout", "x", "p", "f"});
        maybe(in, "mode", [&](const json &v) {
            if (!v.is_string())
                fail("initial.mode", "expected a string");
            c.initial.mode = v.get<std::string>();
        });
        maybe(in, "layout", [&](const json &lay) {
            only_keys(lay, "initial.layout", {"spacing", "direction", "jitter", "momentum_scale"});
            InitialLayout &L = c.initial.layout;
            maybe(lay, "spacing", [&](const json &v) { L.spacing = number(v, "initial.layout.spacing"); });
            maybe(lay, "direction", [&](const json &v) { L.direction = complex_value(v, "initial.layout.direction"); });
            maybe(lay, "jitter", [&](const json &v) { L.jitter = number(v, "initial.layout.jitter"); });
            maybe(lay, "momentum_scale",
                  [&](const json &v) { L.momentum_scale = number(v, "initial.layout.momentum_scale"); });
        });
        maybe(in, "x", [&](const json &v) { c.initial.x = complex_list(v, "initial.x"); });
        maybe(in, "p", [&](const json &v) { c.initial.p = complex_list(v, "initial.p"); });
        maybe(in, "f", [&](const json &v) {
            if (!v.is_array())
                fail("initial.f", "expected an array of rows");
            const auto n = Eigen::Index(v.size());
            c.initial.f = CMatrix(n, n);
            for (Eigen::Index i = 0; i < n; ++i) {
                const auto row = complex_list(v[i], "initial.f[" + std::to_string(i) + "]");
                if (Eigen::Index(row.size()) != n)
                    fail("initial.f", "must be square");
                for (Eigen::Index k = 0; k < n; ++k)
                    c.initial.f(i, k) = row[k];
            }
        });
    });

    maybe(j, "integrator", [&](const json &in) {
        only_keys(in, "integrator", {"T", "samples", "rtol", "atol"});
        maybe(in, "T", [&](const json &v) { c.integrator.T = number(v, "integrator.T"); });
        maybe(in, "samples", [&](const json &v) { c.integrator.samples = integer(v, "integrator.samples"); });
        maybe(in, "rtol", [&](const json &v) { c.integrator.rtol = number(v, "integrator.rtol"); });
        maybe(in, "atol", [&](const json &v) { c.integrator.atol = number(v, "integrator.atol"); });
    });

    maybe(j, "tolerances", [&](const json &in) {
        only_keys(in, "tolerances",
                  {"identities", "kirillov", "conservation", "nonintegrable_drift", "asymptotics", "bracket",
                   "c_hat_spread", "fit_residual", "action_drift", "normalization", "linear_flow",
                   "negative_control_factor"});
        Tolerances &t = c.tolerances;
        const std::pair<const char *, double *> fields[] = {
            {"identities", &t.identities},         {"kirillov", &t.kirillov},
            {"conservation", &t.conservation},     {"nonintegrable_drift", &t.nonintegrable_drift},
            {"asymptotics", &t.asymptotics},       {"bracket", &t.bracket},
            {"c_hat_spread", &t.c_hat_spread},     {"fit_residual", &t.fit_residual},
            {"action_drift", &t.action_drift},     {"normalization", &t.normalization},
            {"linear_flow", &t.linear_flow},       {"negative_control_factor", &t.negative_control_factor}};
        for (const auto &[key, dst] : fields)
            maybe(in, key, [&](const json &v) { *dst = number(v, std::string("tolerances.") + key); });
    });

    maybe(j, "z_grid", [&](const json &in) {
        only_keys(in, "z_grid", {"points", "resample_points"});
        maybe(in, "points", [&](const json &v) { c.z_grid_points = integer(v, "z_grid.points"); });
        maybe(in, "resample_points", [&](const json &v) { c.z_grid_resample = integer(v, "z_grid.resample_points"); });
    });

    maybe(j, "sampling", [&](const json &in) {
        only_keys(in, "sampling", {"phase_points", "fit_trials", "fd_step", "control_diagonal_shift"});
        maybe(in, "phase_points", [&](const json &v) { c.phase_points = integer(v, "sampling.phase_points"); });
        maybe(in, "fit_trials", [&](const json &v) { c.fit_trials = integer(v, "sampling.fit_trials"); });
        maybe(in, "fd_step", [&](const json &v) { c.fd_step = number(v, "sampling.fd_step"); });
        maybe(in, "control_diagonal_shift",
              [&](const json &v) { c.control_diagonal_shift = number(v, "sampling.control_diagonal_shift"); });
    });

    maybe(j, "output", [&](const json &in) {
        only_keys(in, "output", {"dir"});
        maybe(in, "dir", [&](const json &v) {
            if (!v.is_string())
                fail("output.dir", "expected a string");
            c.output_dir = v.get<std::string>();
        });
    });

    maybe(j, "seed", [&](const json &v) {
        if (!v.is_number_unsigned())
            fail("seed", "expected a non-negative integer");
        c.seed = v.get<std::uint64_t>();
    });
    return c;
}

ExperimentConfig load_config(const std::string &path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("config: cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::uint64_t fnv1a64(std::string_view bytes)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string canonical_config(const ExperimentConfig &cfg) { return config_json(cfg).dump(); }

std::string config_hash(const ExperimentConfig &cfg) { return hex64(fnv1a64(canonical_config(cfg))); }

std::string report_json(const RunReport &r, const ExperimentConfig &cfg)
{
    json checks = json::array();
    for (const auto &c : r.checks)
        checks.push_back({{"name", c.name},
                          {"passed", c.passed},
                          {"value", std::isfinite(c.value) ? json(c.value) : json(nullptr)},
                          {"threshold", c.threshold},
                          {"relation", c.relation},
                          {"detail", c.detail}});
    json constants = json::object();
    for (const auto &[k, v] : r.constants)
        constants[k] = complex_json(v);
    json j = {{"tool", "spincal"},
              {"version", version()},
              {"command", r.command},
              {"config_hash", r.config_hash},
              {"config", config_json(cfg)},
              {"passed", r.passed()},
              {"checks", checks},
              {"constants", constants},
              {"notes", r.notes},
              {"tables", json::array()}};
    for (const auto &t : r.tables)
        j["tables"].push_back(t.name + ".csv");
    return j.dump(2) + "\n";
}

std::string timings_json(const RunReport &r)
{
    json j = json::object();
    for (const auto &[k, v] : r.stage_seconds)
        j[k] = v;
    return json({{"command", r.command}, {"config_hash", r.config_hash}, {"stage_seconds", j}}).dump(2) + "\n";
}

std::string table_csv(const Table &t, const std::string &hash)
{
    std::string s = "# tool=spincal version=" + std::string(version()) + " config_hash=" + hash + " table=" + t.name + "\n";
    for (std::size_t c = 0; c < t.columns.size(); ++c)
        s += (c ? "," : "") + t.columns[c];
    s += "\n";
    char buf[40];
    for (const auto &row : t.rows) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            std::snprintf(buf, sizeof buf, "%s%.17g", c ? "," : "", row[c]);
            s += buf;
        }
        s += "\n";
    }
    return s;
}

void write_outputs(const RunReport &r, const ExperimentConfig &cfg, const std::string &dir)
{
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        throw ConfigError("output: cannot create " + dir + ": " + ec.message());
    auto put = [&](const std::string &name, const std::string &content) {
        std::ofstream out(fs::path(dir) / name, std::ios::binary);
        if (!out)
            throw ConfigError("output: cannot write " + name);
        out << content;
    };
    put("report.json", report_json(r, cfg));
    put("timings.json", timings_json(r));
    for (const auto &t : r.tables)
        put(t.name + ".csv", table_csv(t, r.config_hash));
}

} // namespace spincal
