#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ict/proxy.hpp"
#include "ict/rng.hpp"
#include "ict/tasks.hpp"

namespace ict {

inline constexpr int kEnsembleSize = 3;

enum class SamplingMode { around_current_point, around_offline_dataset };

std::string to_string(SamplingMode mode);
SamplingMode sampling_mode_from_string(const std::string& name);

struct IctConfig {
    int T = 200;                      // iterations of the co-teaching loop and of the final ascent
    int M = 128;                      // pseudo-labeled points per subround
    int K = 64;                       // small-loss samples handed to each recipient
    std::optional<double> gamma;      // pseudo-point noise; unset = 0.1 * mean design stddev
    double eta = 0.05;                // design ascent rate
    double alpha = 1e-3;              // fine-tune rate (plain step)
    double beta = 0.2;                // sample-weight rate
    SamplingMode sampling_mode = SamplingMode::around_current_point;
    int n_starts = 16;
    std::uint64_t seed = 0;
    int meta_batch = 128;             // offline rows per weight update
    bool shared_proxy_seed = false;   // all three proxies start from the same seed
    TrainConfig train;

    /// Settings for the task family: T, alpha, beta and the proxy
    /// training rate differ between continuous and discrete tasks.
    static IctConfig defaults_for(TaskKind kind);

    /// Throws std::invalid_argument. `min_iterations` is 1 for ICT and 0 for
    /// the pure-ascent baselines.
    void validate(int min_iterations = 1) const;
};

struct EnsembleState {
    std::array<ProxyParams, kEnsembleSize> proxies;
    std::array<OptimizerState, kEnsembleSize> optimizers;

    bool operator==(const EnsembleState& other) const { return proxies == other.proxies; }
};

/// M points with labels from proxy `labeler_index` (0-based).
struct PseudoBatch {
    Matrix points;
    Vector labels;
    int labeler_index = 0;
};

struct SampleWeights {
    Vector values;
    static SampleWeights ones(int k) { return {Vector::Ones(k)}; }
};

/// The K samples an evaluator proxy agrees with most, in increasing index order.
struct SelectedBatch {
    std::vector<int> indices;
    Matrix designs;
    Vector labels;

    int size() const { return static_cast<int>(indices.size()); }
};

// ---- ensemble ascent ----

/// Mean of the three proxies' input gradients at x.
Vector ensemble_mean_input_grad(const EnsembleState& state, const Vector& x);

/// x + eta * mean input gradient, projected into the design space.
Vector ensemble_ascend_step(const EnsembleState& state, const Vector& x, double eta,
                            const DesignSpace& space);

// ---- pseudo-labeling and co-teaching ----

Matrix sample_around_point(const Vector& center, double gamma, int m, Rng& rng);
/// Each row: a uniformly chosen dataset design plus gamma * N(0, I).
Matrix sample_around_dataset(const Matrix& designs, double gamma, int m, Rng& rng);
Matrix sample_pseudo_points(SamplingMode mode, const Vector& current, const Matrix& offline_designs,
                            double gamma, int m, Rng& rng);

PseudoBatch pseudo_label(const EnsembleState& state, int labeler_index, Matrix points);

/// K smallest (f_evaluator(x_i) - label_i)^2, ties broken by smaller index.
SelectedBatch select_small_loss(const ProxyParams& evaluator, const PseudoBatch& batch, int k);

// ---- sample reweighting ----

/// One plain gradient step on the weighted mean squared error of `selected`.
ProxyParams weighted_finetune_step(const ProxyParams& params, const SelectedBatch& selected,
                                   const SampleWeights& weights, double alpha);

/// d L(theta*(w)) / d w_i where theta*(w) is the one-step fine-tune and L the
/// mean squared error on `offline_batch`. Closed form:
/// -(alpha / K) <dL/dtheta at theta*, d(f(x_i) - y_i)^2/dtheta at theta>.
Vector meta_weight_gradient(const ProxyParams& params, const SelectedBatch& selected,
                            const SampleWeights& weights, const OfflineDataset& offline_batch,
                            double alpha);

/// w - beta * meta_weight_gradient, clamped at zero.
SampleWeights meta_update_weights(const ProxyParams& params, const SelectedBatch& selected,
                                  const SampleWeights& weights, const OfflineDataset& offline_batch,
                                  double alpha, double beta);

// ---- one labeler round ----

/// Seeds for the two random draws of a subround. Keyed by (iteration, role)
/// rather than drawn from one shared stream.
struct SubroundStreams {
    std::uint64_t sampling = 0;
    std::uint64_t minibatch = 0;
};

struct SubroundTrace {
    PseudoBatch batch;
    /// recipients[r] is fine-tuned on selections[r], which was chosen by the
    /// other non-labeler.
    std::array<int, 2> recipients{};
    std::array<SelectedBatch, 2> selections;
    std::array<SampleWeights, 2> weights;
    OfflineDataset offline_batch;
};

struct SubroundOutcome {
    EnsembleState state;
    SubroundTrace trace;
};

/// Pseudo-label with one proxy, exchange small-loss samples between the
/// other two, reweight and fine-tune them. The labeler is left untouched.
/// `cfg.gamma` must be resolved.
SubroundOutcome ict_subround(const EnsembleState& state, int labeler_index, const Vector& current,
                             const OfflineDataset& training_view, const IctConfig& cfg,
                             const SubroundStreams& streams);

// ---- full runs ----

/// Everything a method needs before optimizing: standardized training
/// scores, starting designs and the resolved noise scale.
struct PreparedRun {
    ScoreScaler scaler;
    OfflineDataset training_view;  // scores standardized
    Matrix starts;                 // top n_starts designs by score, best first
    std::vector<int> start_rows;
    double gamma = 0.0;
    double dataset_best = 0.0;     // raw score
};

PreparedRun prepare_run(const OracleTask& task, const OfflineDataset& dataset, const IctConfig& cfg);

/// 0.1 * mean per-dimension standard deviation of the designs.
double default_gamma(const Matrix& designs);

std::uint64_t proxy_seed(const IctConfig& cfg, int index);

/// Trains the three proxies on the standardized view.
EnsembleState pretrain_ensemble(const OfflineDataset& training_view, const IctConfig& cfg);

struct LoopCounters {
    std::int64_t subrounds = 0;
    std::int64_t interleaved_steps = 0;
    std::int64_t final_steps = 0;
};

struct MethodResult {
    std::string method;
    Matrix starts;
    Matrix final_designs;  // decoded (clipped or argmax one-hot)
    Vector final_scores;   // raw oracle scores
    Vector normalized;
    double gamma_used = 0.0;
    double eta_used = 0.0;
    double dataset_best_normalized = 0.0;
    LoopCounters counters;
    /// Design after each final-ascent step, per start.
    std::vector<std::vector<Vector>> trajectories;
};

using IctResult = MethodResult;

/// Scores final designs with the oracle. Must be called outside any TrainingScope.
void score_finals(const OracleTask& task, MethodResult& result);

struct IctHooks {
    /// Called after every subround, with the audit's training flag lifted.
    std::function<void(int start, int iteration, const SubroundTrace&)> on_subround;
};

IctResult run_ict(const OracleTask& task, const OfflineDataset& dataset, const IctConfig& cfg,
                  const IctHooks& hooks = {});

/// Same loop from an already trained ensemble and prepared run.
IctResult run_ict_from(const OracleTask& task, const PreparedRun& prep, const EnsembleState& pretrained,
                       const IctConfig& cfg, const IctHooks& hooks = {});

struct SelIgnLoss {
    double selected = 0.0;
    std::optional<double> ignored;  // absent when every index was selected
};

/// MSE between pseudo-labels and standardized oracle scores over the selected
/// indices and over the rest. Evaluation only.
SelIgnLoss diagnostics_sel_ign(const OracleTask& task, const ScoreScaler& scaler,
                               const PseudoBatch& batch, const SelectedBatch& selected);

}  // namespace ict
