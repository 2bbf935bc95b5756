#include "ict/engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ict {

std::string to_string(SamplingMode mode) {
    return mode == SamplingMode::around_current_point ? "around-current-point" : "around-offline-dataset";
}

SamplingMode sampling_mode_from_string(const std::string& name) {
    if (name == "around-current-point" || name == "point") return SamplingMode::around_current_point;
    if (name == "around-offline-dataset" || name == "dataset") return SamplingMode::around_offline_dataset;
    throw std::invalid_argument("unknown sampling mode '" + name + "'");
}

IctConfig IctConfig::defaults_for(TaskKind kind) {
    IctConfig c;
    if (kind == TaskKind::continuous) {
        c.T = 200;
        c.alpha = 1e-3;
        c.beta = 2e-1;
        c.train.lr = 1e-3;
    } else {
        c.T = 100;
        c.alpha = 1e-3;
        c.beta = 3e-1;
        c.train.lr = 1e-3;
    }
    return c;
}

void IctConfig::validate(int min_iterations) const {
    auto fail = [](const std::string& msg) { throw std::invalid_argument("invalid config: " + msg); };
    if (T < min_iterations) fail("T must be >= " + std::to_string(min_iterations));
    if (M < 1) fail("M must be >= 1");
    if (K < 1 || K > M) fail("K must satisfy 1 <= K <= M");
    if (gamma && !(*gamma >= 0.0)) fail("gamma must be >= 0");
    if (!(eta >= 0.0) || !(alpha >= 0.0) || !(beta >= 0.0)) fail("rates must be >= 0");
    if (n_starts < 1) fail("n_starts must be >= 1");
    if (meta_batch < 1) fail("meta_batch must be >= 1");
    if (train.hidden < 1 || train.batch_size < 1 || train.epochs < 0) fail("bad proxy training settings");
    if (!(train.lr > 0.0)) fail("proxy training rate must be > 0");
}

// ---- ensemble ascent ----

Vector ensemble_mean_input_grad(const EnsembleState& state, const Vector& x) {
    const Vector g = input_grad(state.proxies[0], x) + input_grad(state.proxies[1], x) +
                     input_grad(state.proxies[2], x);
    return g / 3.0;
}

Vector ensemble_ascend_step(const EnsembleState& state, const Vector& x, double eta,
                            const DesignSpace& space) {
    const Vector g = ensemble_mean_input_grad(state, x);
    if (!g.allFinite()) throw std::runtime_error("ensemble_ascend_step: non-finite input gradient");
    return space.project(x + eta * g);
}

// ---- pseudo-labeling and co-teaching ----

Matrix sample_around_point(const Vector& center, double gamma, int m, Rng& rng) {
    if (m < 1) throw std::invalid_argument("sample_around_point: M must be >= 1");
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix pts(m, center.size());
    for (int i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < center.size(); ++j) pts(i, j) = center(j) + gamma * normal(rng);
    return pts;
}

Matrix sample_around_dataset(const Matrix& designs, double gamma, int m, Rng& rng) {
    if (m < 1) throw std::invalid_argument("sample_around_dataset: M must be >= 1");
    if (designs.rows() < 1) throw std::invalid_argument("sample_around_dataset: no designs");
    std::uniform_int_distribution<Eigen::Index> pick(0, designs.rows() - 1);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix pts(m, designs.cols());
    for (int i = 0; i < m; ++i) {
        const Eigen::Index row = pick(rng);
        for (Eigen::Index j = 0; j < designs.cols(); ++j) pts(i, j) = designs(row, j) + gamma * normal(rng);
    }
    return pts;
}

Matrix sample_pseudo_points(SamplingMode mode, const Vector& current, const Matrix& offline_designs,
                            double gamma, int m, Rng& rng) {
    if (!(gamma >= 0.0)) throw std::invalid_argument("sample_pseudo_points: gamma must be >= 0");
    return mode == SamplingMode::around_current_point ? sample_around_point(current, gamma, m, rng)
                                                      : sample_around_dataset(offline_designs, gamma, m, rng);
}

PseudoBatch pseudo_label(const EnsembleState& state, int labeler_index, Matrix points) {
    if (labeler_index < 0 || labeler_index >= kEnsembleSize)
        throw std::invalid_argument("pseudo_label: labeler index out of range");
    PseudoBatch b;
    b.labels = forward(state.proxies[static_cast<std::size_t>(labeler_index)], points);
    b.points = std::move(points);
    b.labeler_index = labeler_index;
    return b;
}

namespace {

SelectedBatch select_by_losses(const PseudoBatch& batch, const Vector& losses, int k) {
    const int m = static_cast<int>(batch.points.rows());
    if (k < 1 || k > m) throw std::invalid_argument("select_small_loss: K must satisfy 1 <= K <= M");
    std::vector<int> order(static_cast<std::size_t>(m));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return losses(a) < losses(b); });
    order.resize(static_cast<std::size_t>(k));
    std::sort(order.begin(), order.end());

    SelectedBatch s;
    s.designs.resize(k, batch.points.cols());
    s.labels.resize(k);
    for (int i = 0; i < k; ++i) {
        s.designs.row(i) = batch.points.row(order[static_cast<std::size_t>(i)]);
        s.labels(i) = batch.labels(order[static_cast<std::size_t>(i)]);
    }
    s.indices = std::move(order);
    return s;
}

void require_weights(const SelectedBatch& selected, const SampleWeights& weights) {
    if (weights.values.size() != selected.size())
        throw std::invalid_argument("sample weight count differs from selected batch size");
    if ((weights.values.array() < 0.0).any()) throw std::invalid_argument("negative sample weight");
}

}  // namespace

SelectedBatch select_small_loss(const ProxyParams& evaluator, const PseudoBatch& batch, int k) {
    const Vector losses = (forward(evaluator, batch.points) - batch.labels).cwiseAbs2();
    return select_by_losses(batch, losses, k);
}

// ---- sample reweighting ----

ProxyParams weighted_finetune_step(const ProxyParams& params, const SelectedBatch& selected,
                                   const SampleWeights& weights, double alpha) {
    require_weights(selected, weights);
    const LossAndGradient lg = weighted_mse_grad(params, selected.designs, selected.labels, weights.values);
    static const OptimizerState plain{};
    return apply_step(params, lg.grad, alpha, plain).params;
}

Vector meta_weight_gradient(const ProxyParams& params, const SelectedBatch& selected,
                            const SampleWeights& weights, const OfflineDataset& offline_batch,
                            double alpha) {
    require_weights(selected, weights);
    if (offline_batch.size() < 1) throw std::invalid_argument("meta_weight_gradient: empty offline batch");

    const ProxyParams tuned = weighted_finetune_step(params, selected, weights, alpha);
    const Gradient offline_grad = mse_grad(tuned, offline_batch.designs, offline_batch.scores).grad;
    if (!offline_grad.all_finite()) throw std::runtime_error("meta_weight_gradient: non-finite offline gradient");

    // d(f(x_i) - y_i)^2/dtheta = 2 r_i df(x_i)/dtheta, so the inner product
    // reduces to a forward-mode directional derivative along offline_grad.
    const Vector residual = forward(params, selected.designs) - selected.labels;
    const Vector directional = param_directional_derivative(params, selected.designs, offline_grad);
    const double k = static_cast<double>(selected.size());
    Vector grad = (-2.0 * alpha / k) * residual.cwiseProduct(directional);
    if (!grad.allFinite()) throw std::runtime_error("meta_weight_gradient: non-finite result");
    return grad;
}

SampleWeights meta_update_weights(const ProxyParams& params, const SelectedBatch& selected,
                                  const SampleWeights& weights, const OfflineDataset& offline_batch,
                                  double alpha, double beta) {
    const Vector g = meta_weight_gradient(params, selected, weights, offline_batch, alpha);
    return {(weights.values - beta * g).cwiseMax(0.0)};
}

// ---- one labeler round ----

namespace {

OfflineDataset draw_minibatch(const OfflineDataset& data, int size, std::uint64_t seed) {
    const int n = data.size();
    const int take = std::min(n, size);
    std::vector<int> rows(static_cast<std::size_t>(n));
    std::iota(rows.begin(), rows.end(), 0);
    Rng rng(seed);
    // Partial Fisher-Yates: the first `take` entries are a uniform sample.
    for (int i = 0; i < take; ++i) {
        std::uniform_int_distribution<int> pick(i, n - 1);
        std::swap(rows[static_cast<std::size_t>(i)], rows[static_cast<std::size_t>(pick(rng))]);
    }
    rows.resize(static_cast<std::size_t>(take));
    return data.subset(rows);
}

}  // namespace

SubroundOutcome ict_subround(const EnsembleState& state, int labeler_index, const Vector& current,
                             const OfflineDataset& training_view, const IctConfig& cfg,
                             const SubroundStreams& streams) {
    if (labeler_index < 0 || labeler_index >= kEnsembleSize)
        throw std::invalid_argument("ict_subround: labeler index out of range");
    if (!cfg.gamma) throw std::invalid_argument("ict_subround: gamma must be resolved");

    SubroundOutcome out{state, {}};
    SubroundTrace& trace = out.trace;

    Rng sampling_rng(streams.sampling);
    Matrix points = sample_pseudo_points(cfg.sampling_mode, current, training_view.designs, *cfg.gamma,
                                         cfg.M, sampling_rng);
    trace.batch = pseudo_label(state, labeler_index, std::move(points));

    const int a = (labeler_index + 1) % kEnsembleSize;
    const int b = (labeler_index + 2) % kEnsembleSize;
    trace.recipients = {std::min(a, b), std::max(a, b)};

    // Each recipient learns from the samples the other non-labeler agrees with.
    for (int r = 0; r < 2; ++r) {
        const int evaluator = trace.recipients[static_cast<std::size_t>(1 - r)];
        trace.selections[static_cast<std::size_t>(r)] =
            select_small_loss(state.proxies[static_cast<std::size_t>(evaluator)], trace.batch, cfg.K);
    }

    // Shared by both recipients so swapping their roles swaps their results.
    trace.offline_batch = draw_minibatch(training_view, cfg.meta_batch, streams.minibatch);

    for (int r = 0; r < 2; ++r) {
        const auto recipient = static_cast<std::size_t>(trace.recipients[static_cast<std::size_t>(r)]);
        const SelectedBatch& sel = trace.selections[static_cast<std::size_t>(r)];
        const ProxyParams& theta = state.proxies[recipient];
        SampleWeights w = meta_update_weights(theta, sel, SampleWeights::ones(sel.size()),
                                              trace.offline_batch, cfg.alpha, cfg.beta);
        out.state.proxies[recipient] = weighted_finetune_step(theta, sel, w, cfg.alpha);
        trace.weights[static_cast<std::size_t>(r)] = std::move(w);
    }
    return out;
}

// ---- full runs ----

double default_gamma(const Matrix& designs) {
    if (designs.rows() < 1) throw std::invalid_argument("default_gamma: no designs");
    const Eigen::RowVectorXd mean = designs.colwise().mean();
    const Eigen::RowVectorXd var = (designs.rowwise() - mean).array().square().colwise().mean();
    return 0.1 * var.array().sqrt().mean();
}

PreparedRun prepare_run(const OracleTask& task, const OfflineDataset& dataset, const IctConfig& cfg) {
    if (dataset.size() < 1) throw std::invalid_argument("dataset is empty");
    if (dataset.dim() != task.dim())
        throw std::invalid_argument("dataset has " + std::to_string(dataset.dim()) + " columns, task '" +
                                    task.name() + "' expects " + std::to_string(task.dim()));
    PreparedRun p;
    p.scaler = ScoreScaler::fit(dataset.scores);
    p.training_view = dataset;
    p.training_view.scores = p.scaler.apply(dataset.scores);

    std::vector<int> order(static_cast<std::size_t>(dataset.size()));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int l, int r) { return dataset.scores(l) > dataset.scores(r); });
    order.resize(static_cast<std::size_t>(std::min(cfg.n_starts, dataset.size())));
    p.start_rows = order;
    p.starts.resize(static_cast<Eigen::Index>(order.size()), dataset.dim());
    for (std::size_t i = 0; i < order.size(); ++i)
        p.starts.row(static_cast<Eigen::Index>(i)) = dataset.designs.row(order[i]);
    p.dataset_best = dataset.scores(order.front());
    p.gamma = cfg.gamma ? *cfg.gamma : default_gamma(dataset.designs);
    return p;
}

std::uint64_t proxy_seed(const IctConfig& cfg, int index) {
    return derive_seed(cfg.seed, {role::proxy, cfg.shared_proxy_seed ? 0u : static_cast<std::uint64_t>(index)});
}

EnsembleState pretrain_ensemble(const OfflineDataset& training_view, const IctConfig& cfg) {
    TrainingScope scope;
    EnsembleState s;
    for (int i = 0; i < kEnsembleSize; ++i) {
        s.proxies[static_cast<std::size_t>(i)] = train_proxy(training_view, cfg.train, proxy_seed(cfg, i));
        s.optimizers[static_cast<std::size_t>(i)] =
            make_optimizer_state(OptimizerKind::plain_sgd, s.proxies[static_cast<std::size_t>(i)]);
    }
    return s;
}

void score_finals(const OracleTask& task, MethodResult& result) {
    if (in_training_scope()) throw OracleHygieneError("final designs scored inside a training scope");
    result.final_scores = task.score_rows(result.final_designs);
    result.normalized.resize(result.final_scores.size());
    for (Eigen::Index i = 0; i < result.final_scores.size(); ++i)
        result.normalized(i) = normalize_score(result.final_scores(i), task.y_min(), task.y_max());
}

IctResult run_ict(const OracleTask& task, const OfflineDataset& dataset, const IctConfig& cfg,
                  const IctHooks& hooks) {
    cfg.validate(1);
    const PreparedRun prep = prepare_run(task, dataset, cfg);
    const EnsembleState pretrained = pretrain_ensemble(prep.training_view, cfg);
    return run_ict_from(task, prep, pretrained, cfg, hooks);
}

IctResult run_ict_from(const OracleTask& task, const PreparedRun& prep, const EnsembleState& pretrained,
                       const IctConfig& cfg, const IctHooks& hooks) {
    cfg.validate(1);
    IctConfig resolved = cfg;
    resolved.gamma = prep.gamma;
    const DesignSpace& space = task.space();

    IctResult result;
    result.method = "ict";
    result.starts = prep.starts;
    result.gamma_used = prep.gamma;
    result.eta_used = cfg.eta;
    result.dataset_best_normalized = normalize_score(prep.dataset_best, task.y_min(), task.y_max());
    result.final_designs.resize(prep.starts.rows(), prep.starts.cols());
    result.trajectories.resize(static_cast<std::size_t>(prep.starts.rows()));

    {
        TrainingScope scope;
        for (Eigen::Index s = 0; s < prep.starts.rows(); ++s) {
            const Vector start = prep.starts.row(s).transpose();
            const auto start_key = static_cast<std::uint64_t>(s);
            EnsembleState state = pretrained;
            Vector x = start;
            for (int t = 0; t < cfg.T; ++t) {
                for (int labeler = 0; labeler < kEnsembleSize; ++labeler) {
                    const auto key = static_cast<std::uint64_t>(labeler);
                    const auto iter = static_cast<std::uint64_t>(t);
                    const SubroundStreams streams{
                        derive_seed(cfg.seed, {role::sampling, start_key, iter, key}),
                        derive_seed(cfg.seed, {role::minibatch, start_key, iter, key})};
                    SubroundOutcome out = ict_subround(state, labeler, x, prep.training_view, resolved, streams);
                    state = std::move(out.state);
                    ++result.counters.subrounds;
                    if (hooks.on_subround) {
                        EvaluationScope eval;
                        hooks.on_subround(static_cast<int>(s), t, out.trace);
                    }
                }
                x = ensemble_ascend_step(state, x, cfg.eta, space);
                ++result.counters.interleaved_steps;
            }

            // Fresh ascent from the same start with the fine-tuned ensemble frozen.
            auto& traj = result.trajectories[static_cast<std::size_t>(s)];
            x = start;
            traj.push_back(x);
            for (int t = 0; t < cfg.T; ++t) {
                x = ensemble_ascend_step(state, x, cfg.eta, space);
                ++result.counters.final_steps;
                traj.push_back(x);
            }
            result.final_designs.row(s) = space.decode(x).transpose();
        }
    }
    score_finals(task, result);
    return result;
}

SelIgnLoss diagnostics_sel_ign(const OracleTask& task, const ScoreScaler& scaler, const PseudoBatch& batch,
                               const SelectedBatch& selected) {
    const auto m = batch.points.rows();
    std::vector<bool> is_selected(static_cast<std::size_t>(m), false);
    for (int i : selected.indices) is_selected[static_cast<std::size_t>(i)] = true;

    double sel = 0.0, ign = 0.0;
    int n_sel = 0, n_ign = 0;
    for (Eigen::Index i = 0; i < m; ++i) {
        const double truth = scaler.apply(task.score(batch.points.row(i).transpose()));
        const double err = std::pow(batch.labels(i) - truth, 2);
        if (is_selected[static_cast<std::size_t>(i)]) {
            sel += err;
            ++n_sel;
        } else {
            ign += err;
            ++n_ign;
        }
    }
    SelIgnLoss out;
    out.selected = n_sel > 0 ? sel / n_sel : 0.0;
    if (n_ign > 0) out.ignored = ign / n_ign;
    return out;
}

}  // namespace ict
