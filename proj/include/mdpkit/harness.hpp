#pragma once

#include <optional>
#include <string>

#include "mdpkit/model_io.hpp"

namespace mdpkit {

/// Config error -> exit 2; failed verification kind -> exit 3.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct CheckFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// One experiment: a kind plus the union of the per-kind knobs. Parsed
/// from JSON (`--config`) with flag overrides on top; everything that
/// influenced the run is echoed into the record.
struct ExperimentConfig {
    std::string kind;
    std::optional<std::string> model_path;
    std::optional<GeneratorSpec> generator;
    std::optional<std::uint64_t> seed;
    std::string out_dir = ".";

    double alpha = 0.9;
    double tol = 1e-8;
    double eps = 0.2;
    std::string alpha_exact = "1/2";  // rational discount for verify-rational
    std::int64_t steps = 100000;
    int episodes = 5;
    int start = 0;
    bool average_criterion = false;          // solve/evaluate: limit-average instead
    std::string policy = "uniform";          // evaluate: "uniform" or a policy file
    int stochastic_policies = 100;           // perturb-audit sample size
    std::int64_t stride = 1000;              // learn-avg curve stride
    std::int64_t desk_l1 = 100;              // desk schedule first exploration length
    bool theoretical_schedule = false;       // learn-avg: use the analysis budgets
    std::string rate_schedule = "harmonic";  // learn-q: harmonic | polynomial
    double omega = 1.0;
    std::string exploration = "eps-greedy";  // learn-q: greedy | eps-greedy
    double epsilon_c = 0;
    int sweep_points = 6;  // evaluate --sweep: alphas 1 - 10^-k
    bool sweep = false;
    std::string record_path;  // plot-data input
    std::string series;       // plot-data selector
    int jobs = 1;

    static ExperimentConfig from_json(const json& doc);
    json to_json() const;
    void validate_for_kind() const;
};

struct RunRecord {
    json config_echo;
    std::string version;
    json payload;
    json acceptance;  // per-kind verdicts, empty object when not applicable
    double wall_ms = 0;

    /// Deterministic serialization: everything except the wall clock,
    /// which is written to a sidecar by the CLI.
    json to_json() const;
};

std::string tool_version();

/// Dispatches a config to the corresponding pipeline and collects the
/// payload. Side files (CSV curves, model files) are written under
/// config.out_dir.
RunRecord run_experiment(const ExperimentConfig& config);

/// Extracts a named (x, y) series from a record payload.
std::vector<std::pair<double, double>> extract_series(const RunRecord& record,
                                                      const std::string& series);
std::vector<std::string> available_series(const RunRecord& record);

}  // namespace mdpkit
