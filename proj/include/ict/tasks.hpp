#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ict/dataset.hpp"

namespace ict {

enum class TaskKind { continuous, discrete };

/// The space proxies see. Continuous designs live in a box; discrete designs
/// are `seq_len` one-hot blocks of width `alphabet`, optimized in the
/// continuous relaxation and decoded by per-block argmax.
struct DesignSpace {
    TaskKind kind = TaskKind::continuous;
    int dim = 0;
    Vector lower, upper;  // continuous only
    int seq_len = 0;      // discrete only
    int alphabet = 0;     // discrete only

    /// Clip to bounds; the discrete relaxation is the unit box.
    Vector project(const Vector& x) const;

    /// Continuous: clip to bounds. Discrete: per-block argmax one-hot, ties to
    /// the lowest symbol.
    Vector decode(const Vector& x) const;

    std::vector<int> to_sequence(const Vector& one_hot) const;
    Vector from_sequence(const std::vector<int>& seq) const;
};

/// Counts oracle queries and flags any made while a TrainingScope is active
/// on the calling thread.
class OracleAudit {
public:
    std::uint64_t evaluations() const { return evaluations_.load(); }
    std::uint64_t violations() const { return violations_.load(); }
    void set_strict(bool strict) { strict_.store(strict); }
    bool strict() const { return strict_.load(); }
    void record_query();

private:
    std::atomic<std::uint64_t> evaluations_{0};
    std::atomic<std::uint64_t> violations_{0};
    std::atomic<bool> strict_{false};
};

OracleAudit& oracle_audit();

/// Marks the current thread as inside training, fine-tuning or design
/// optimization. Nests.
class TrainingScope {
public:
    TrainingScope();
    ~TrainingScope();
    TrainingScope(const TrainingScope&) = delete;
    TrainingScope& operator=(const TrainingScope&) = delete;
};

/// Temporarily lifts any TrainingScope on this thread, for evaluation-only
/// diagnostics computed mid-run.
class EvaluationScope {
public:
    EvaluationScope();
    ~EvaluationScope();
    EvaluationScope(const EvaluationScope&) = delete;
    EvaluationScope& operator=(const EvaluationScope&) = delete;

private:
    int saved_depth_;
};

bool in_training_scope();

/// Thrown by a strict audit when the oracle is queried during training.
struct OracleHygieneError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class OracleTask {
public:
    using Objective = std::function<double(const Vector&)>;

    OracleTask(std::string name, DesignSpace space, Objective objective, double y_min, double y_max,
               std::string extremes_source);

    const std::string& name() const { return name_; }
    TaskKind kind() const { return space_.kind; }
    const DesignSpace& space() const { return space_; }
    int dim() const { return space_.dim; }
    double y_min() const { return y_min_; }
    double y_max() const { return y_max_; }
    /// How y_min/y_max were obtained ("analytic", "enumeration", "reference-sample").
    const std::string& extremes_source() const { return extremes_source_; }

    /// Ground-truth score. Discrete designs are decoded first. Every call is
    /// recorded by the oracle audit.
    double score(const Vector& design) const;
    Vector score_rows(const Matrix& designs) const;

    /// Unaudited evaluation for dataset construction and enumeration.
    double evaluate_unaudited(const Vector& design) const;

private:
    std::string name_;
    DesignSpace space_;
    Objective objective_;
    double y_min_;
    double y_max_;
    std::string extremes_source_;
};

/// quadratic-bowl-8d, negated-ackley-10d, rosenbrock-valley-6d, seq-lookup-8x4.
const std::vector<OracleTask>& builtin_tasks();

/// Throws std::invalid_argument for unknown names.
const OracleTask& find_task(const std::string& name);

/// Every design of a discrete task, one one-hot row per sequence, in
/// lexicographic order (first position most significant).
Matrix enumerate_discrete_designs(const DesignSpace& space);

struct DatasetOptions {
    int n = 1000;
    double exclude_top = 0.2;
    std::uint64_t seed = 0;
    /// Continuous candidate pool size; 0 means 5 * n. Discrete tasks always
    /// use the full enumerated domain as the pool.
    int pool_size = 0;
};

/// The candidate pool make_offline_dataset draws from, before truncation.
OfflineDataset candidate_pool(const OracleTask& task, const DatasetOptions& options);

/// Draws a uniform candidate pool, drops the top `exclude_top` fraction by
/// score and returns `n` uniformly chosen survivors.
OfflineDataset make_offline_dataset(const OracleTask& task, const DatasetOptions& options);

/// (y - y_min) / (y_max - y_min).
double normalize_score(double y, double y_min, double y_max);

/// Z-scoring of scores used for proxy training; strictly increasing.
struct ScoreScaler {
    double mean = 0.0;
    double scale = 1.0;

    static ScoreScaler fit(const Vector& scores);
    double apply(double y) const { return (y - mean) / scale; }
    Vector apply(const Vector& ys) const;
    double invert(double z) const { return z * scale + mean; }
};

}  // namespace ict
