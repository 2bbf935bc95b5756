#include "ict/baselines.hpp"

#include <stdexcept>

namespace ict {

namespace {

template <class GradFn>
MethodResult ascend_all(const OracleTask& task, const PreparedRun& prep, const IctConfig& cfg,
                        std::string method, GradFn&& grad_at) {
    MethodResult result;
    result.method = std::move(method);
    result.starts = prep.starts;
    result.gamma_used = prep.gamma;
    result.eta_used = cfg.eta;
    result.dataset_best_normalized = normalize_score(prep.dataset_best, task.y_min(), task.y_max());
    result.final_designs.resize(prep.starts.rows(), prep.starts.cols());
    result.trajectories.resize(static_cast<std::size_t>(prep.starts.rows()));
    const DesignSpace& space = task.space();
    {
        TrainingScope scope;
        for (Eigen::Index s = 0; s < prep.starts.rows(); ++s) {
            auto& traj = result.trajectories[static_cast<std::size_t>(s)];
            Vector x = prep.starts.row(s).transpose();
            traj.push_back(x);
            for (int t = 0; t < cfg.T; ++t) {
                const Vector g = grad_at(x);
                if (!g.allFinite()) throw std::runtime_error(result.method + ": non-finite input gradient");
                x = space.project(x + cfg.eta * g);
                ++result.counters.final_steps;
                traj.push_back(x);
            }
            result.final_designs.row(s) = space.decode(x).transpose();
        }
    }
    score_finals(task, result);
    return result;
}

}  // namespace

Vector ensemble_min_input_grad(const EnsembleState& state, const Vector& x) {
    std::size_t lowest = 0;
    double lowest_value = forward_one(state.proxies[0], x);
    for (std::size_t i = 1; i < state.proxies.size(); ++i) {
        const double v = forward_one(state.proxies[i], x);
        if (v < lowest_value) {
            lowest_value = v;
            lowest = i;
        }
    }
    return input_grad(state.proxies[lowest], x);
}

MethodResult run_grad_from(const OracleTask& task, const PreparedRun& prep, const ProxyParams& proxy,
                           const IctConfig& cfg) {
    cfg.validate(0);
    return ascend_all(task, prep, cfg, "grad", [&](const Vector& x) { return input_grad(proxy, x); });
}

MethodResult run_grad(const OracleTask& task, const OfflineDataset& dataset, const IctConfig& cfg) {
    cfg.validate(0);
    const PreparedRun prep = prepare_run(task, dataset, cfg);
    ProxyParams proxy;
    {
        TrainingScope scope;
        proxy = train_proxy(prep.training_view, cfg.train, proxy_seed(cfg, 0));
    }
    return run_grad_from(task, prep, proxy, cfg);
}

MethodResult run_ensemble_from(const OracleTask& task, const PreparedRun& prep,
                               const EnsembleState& ensemble, const IctConfig& cfg, EnsembleMode mode) {
    cfg.validate(0);
    if (mode == EnsembleMode::mean)
        return ascend_all(task, prep, cfg, "mean",
                          [&](const Vector& x) { return ensemble_mean_input_grad(ensemble, x); });
    return ascend_all(task, prep, cfg, "min",
                      [&](const Vector& x) { return ensemble_min_input_grad(ensemble, x); });
}

MethodResult run_ensemble(const OracleTask& task, const OfflineDataset& dataset, const IctConfig& cfg,
                          EnsembleMode mode) {
    cfg.validate(0);
    const PreparedRun prep = prepare_run(task, dataset, cfg);
    const EnsembleState ensemble = pretrain_ensemble(prep.training_view, cfg);
    return run_ensemble_from(task, prep, ensemble, cfg, mode);
}

}  // namespace ict
