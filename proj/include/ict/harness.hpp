#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ict/engine.hpp"

namespace ict {

inline const std::vector<std::string>& known_methods() {
    static const std::vector<std::string> methods{"ict", "grad", "mean", "min"};
    return methods;
}

/// Optional overrides on top of the task-family defaults.
struct IctOverrides {
    std::optional<int> T, M, K, n_starts, hidden, epochs, meta_batch;
    std::optional<double> gamma, eta, alpha, beta, train_lr;
    std::optional<SamplingMode> sampling_mode;
    std::optional<bool> shared_proxy_seed;
};

struct ExperimentConfig {
    std::string task;
    std::string method = "ict";
    int trials = 8;
    std::uint64_t base_seed = 0;
    /// When non-empty, replaces base_seed + i and `trials`.
    std::vector<std::uint64_t> seeds;

    std::optional<int> dataset_size;  // default 1000 continuous, 2000 discrete
    double exclude_top = 0.2;
    std::uint64_t data_seed = 0;
    std::string data_path;            // load the dataset from CSV instead of generating it

    IctOverrides overrides;
    int workers = 1;

    std::vector<std::uint64_t> trial_seeds() const;

    /// Rejects unknown task/method and malformed counts before any compute.
    void validate() const;
};

/// Task-family defaults, overrides applied, seeded for one trial.
IctConfig resolve_ict_config(const ExperimentConfig& config, const OracleTask& task, std::uint64_t trial_seed);

OfflineDataset experiment_dataset(const ExperimentConfig& config, const OracleTask& task);

struct TrialReport {
    std::uint64_t seed = 0;
    double best = 0.0;    // 100th percentile normalized score over the final designs
    double median = 0.0;  // 50th percentile
    double gamma_used = 0.0;
    double eta_used = 0.0;
    bool above_reference_max = false;
    double wall_seconds = 0.0;  // not part of the canonical json
};

struct MeanSe {
    double mean = 0.0;
    std::optional<double> se;  // absent for a single trial
};

/// Mean and standard error (unbiased sample stddev / sqrt(n)).
MeanSe mean_and_se(const std::vector<double>& values);

/// Median; the mean of the two middle values for even counts.
double median_of(std::vector<double> values);

struct RunReport {
    std::string task;
    std::string method;
    nlohmann::json config;  // full echo of the resolved settings
    double dataset_best_normalized = 0.0;
    std::vector<TrialReport> trials;  // sorted by seed
    MeanSe best;
    MeanSe median;
    std::uint64_t oracle_violations = 0;
    double wall_seconds = 0.0;  // not part of the canonical json
};

/// Runs every trial (up to `workers` concurrently). Throws
/// OracleHygieneError if the oracle is queried during training.
RunReport run_experiment(const ExperimentConfig& config);

enum class SweepParam { K, beta, alpha };
SweepParam sweep_param_from_string(const std::string& name);
std::string to_string(SweepParam param);

/// One run_experiment per value with shared seeds.
std::vector<RunReport> sweep(const ExperimentConfig& config, SweepParam param, const std::vector<double>& values);

struct MethodRank {
    std::string method;
    double mean_rank = 0.0;
    double median_rank = 0.0;
};

/// Ranks methods per task by mean best score (1 = best, ties share the
/// average rank), then aggregates across tasks. Every method must appear on
/// every task exactly once.
std::vector<MethodRank> rank_table(const std::vector<RunReport>& reports);

// ---- emission ----

enum class ReportFormat { json, csv, markdown };
ReportFormat report_format_from_string(const std::string& name);

nlohmann::json to_json(const RunReport& report);
RunReport report_from_json(const nlohmann::json& j);

/// Canonical text: sorted keys, two-space indent, trailing newline.
std::string canonical_json(const RunReport& report);
std::string canonical_json(const std::vector<RunReport>& reports);

/// One row per trial.
std::string to_csv(const std::vector<RunReport>& reports);

/// task | method | 100th pct mean +- se | 50th pct mean +- se
std::string to_markdown(const std::vector<RunReport>& reports);

std::string rank_markdown(const std::vector<MethodRank>& ranks);

std::string render(const std::vector<RunReport>& reports, ReportFormat format);

/// Writes `render(...)` to `path`; throws std::runtime_error naming the path on failure.
void emit(const std::vector<RunReport>& reports, ReportFormat format, const std::string& path);

/// Reads a json file holding one report or an array of reports.
std::vector<RunReport> read_reports(const std::string& path);

}  // namespace ict
