#pragma once

#include "spincal/geometry.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace spincal {

const char *version();

struct LatticeConfig {
    std::string kind = "elliptic"; // elliptic | trigonometric | rational
    cplx omega1{1.0, 0.0};
    cplx omega2{0.3, 1.1};
};

struct ModelConfig {
    int N = 2;
    int l = 1;
    std::vector<cplx> lambdas; // empty: lambda_a proportional to a, summing to N * diagonal
    double diagonal = 2.0;
    std::vector<double> diagonal_values;
    Variant variant = Variant::elliptic;
    LatticeConfig lattice;

    OrbitSpec orbit() const;
};

struct InitialConfig {
    std::string mode = "seeded"; // seeded | explicit
    InitialLayout layout;
    std::vector<cplx> x, p;
    CMatrix f;
};

struct IntegratorSettings {
    double T = 10.0;
    int samples = 101;
    double rtol = 1e-10;
    double atol = 1e-12;
};

/// Upper bounds unless noted; --tol-scale multiplies upper bounds and divides lower bounds.
struct Tolerances {
    double identities = 1e-9;
    double kirillov = 1e-9;
    double conservation = 1e-7;
    double nonintegrable_drift = 1e-3; // lower bound
    double asymptotics = 1e-6;
    double bracket = 1e-5;
    double c_hat_spread = 1e-3;
    double fit_residual = 1e-4;
    double action_drift = 1e-6;
    double normalization = 1e-7;
    double linear_flow = 1e-4;
    double negative_control_factor = 10.0; // lower bound on control ratio / linear_flow
};

struct ExperimentConfig {
    ModelConfig model;
    InitialConfig initial;
    IntegratorSettings integrator;
    Tolerances tolerances;
    int z_grid_points = 8;
    int z_grid_resample = 13;
    int phase_points = 3;
    int fit_trials = 20;
    double fd_step = 1e-5;
    double control_diagonal_shift = 0.5;
    std::string output_dir; // empty: no files
    std::optional<std::uint64_t> seed = 1;

    void validate() const;
    void scale_tolerances(double factor);
};

/// Parses the JSON config; unknown keys, wrong types and violated invariants throw ConfigError.
/// Keys that are absent keep their defaults, except `seed`, which is absent unless given.
ExperimentConfig parse_config(std::string_view json_text);
ExperimentConfig load_config(const std::string &path);

/// Canonical JSON (sorted keys, output directory omitted) and its FNV-1a 64-bit hash in hex.
std::string canonical_config(const ExperimentConfig &cfg);
std::string config_hash(const ExperimentConfig &cfg);
std::uint64_t fnv1a64(std::string_view bytes);

Lattice make_lattice(const LatticeConfig &cfg);
/// The configured initial point; seeded mode uses seed + offset.
PhasePoint initial_point(const ExperimentConfig &cfg, std::uint64_t offset = 0);

struct DofAudit {
    int particle = 0;
    int orbit = 0;
    int reduction = 0;
    int total = 0;
    int two_g = 0;
    bool equal = false;
};

DofAudit dof_audit(int N, int l);

struct CheckResult {
    std::string name;
    bool passed = false;
    double value = 0;
    double threshold = 0;
    std::string relation; // "<", ">", "==" or "" for a plain flag
    std::string detail;
};

/// Numeric table written as CSV with complex entries split into _re/_im columns by the producer.
struct Table {
    std::string name;
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
};

struct RunReport {
    std::string command;
    std::string config_hash;
    std::vector<CheckResult> checks;
    std::vector<std::pair<std::string, cplx>> constants;
    std::vector<std::pair<std::string, double>> stage_seconds;
    std::vector<Table> tables;
    std::vector<std::string> notes;

    bool passed() const;
    CheckResult &check(std::string name, double value, double threshold, std::string relation, std::string detail = {});
    CheckResult &flag(std::string name, bool ok, std::string detail = {});
    const CheckResult *find(std::string_view name) const;
};

/// Deterministic report JSON (no timings).
std::string report_json(const RunReport &report, const ExperimentConfig &cfg);
std::string timings_json(const RunReport &report);
/// CSV: one comment line with tool, version, config hash and table name, the header, rows in %.17g.
std::string table_csv(const Table &table, const std::string &hash);
/// Writes report.json, timings.json and <table>.csv into dir (created if missing).
void write_outputs(const RunReport &report, const ExperimentConfig &cfg, const std::string &dir);

// Pipelines. Numerical failures inside a stage are recorded as a failed "stage:<name>" check.
void kernel_identity_checks(RunReport &report, const Lattice &lat, double tol);
void kirillov_checks(RunReport &report, const OrbitSpec &spec, const SpinMatrix &f, std::uint64_t seed, double tol);
RunReport run_identities(const ExperimentConfig &cfg);
RunReport run_simulate(const ExperimentConfig &cfg, bool expect_nonintegrable);
RunReport run_spectral(const ExperimentConfig &cfg);
RunReport run_divisor(const ExperimentConfig &cfg);
RunReport run_darboux(const ExperimentConfig &cfg);
RunReport run_actions(const ExperimentConfig &cfg);
RunReport run_audit(int N, int l);

/// argv without the program name. 0: all checks pass, 1: a check failed, 2: configuration error.
int run_command(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

} // namespace spincal
