#include "ict/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "ict/baselines.hpp"

namespace ict {

std::vector<std::uint64_t> ExperimentConfig::trial_seeds() const {
    if (!seeds.empty()) return seeds;
    std::vector<std::uint64_t> out;
    for (int i = 0; i < trials; ++i) out.push_back(base_seed + static_cast<std::uint64_t>(i));
    return out;
}

void ExperimentConfig::validate() const {
    find_task(task);
    if (std::find(known_methods().begin(), known_methods().end(), method) == known_methods().end())
        throw std::invalid_argument("unknown method '" + method + "'");
    if (seeds.empty() && trials < 1) throw std::invalid_argument("trials must be >= 1");
    if (dataset_size && *dataset_size < 1) throw std::invalid_argument("dataset size must be >= 1");
    if (workers < 1) throw std::invalid_argument("workers must be >= 1");
    auto sorted = trial_seeds();
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw std::invalid_argument("duplicate trial seed");
}

IctConfig resolve_ict_config(const ExperimentConfig& config, const OracleTask& task, std::uint64_t trial_seed) {
    IctConfig c = IctConfig::defaults_for(task.kind());
    const IctOverrides& o = config.overrides;
    if (o.T) c.T = *o.T;
    if (o.M) c.M = *o.M;
    if (o.K) c.K = *o.K;
    if (o.n_starts) c.n_starts = *o.n_starts;
    if (o.hidden) c.train.hidden = *o.hidden;
    if (o.epochs) c.train.epochs = *o.epochs;
    if (o.meta_batch) c.meta_batch = *o.meta_batch;
    if (o.gamma) c.gamma = *o.gamma;
    if (o.eta) c.eta = *o.eta;
    if (o.alpha) c.alpha = *o.alpha;
    if (o.beta) c.beta = *o.beta;
    if (o.train_lr) c.train.lr = *o.train_lr;
    if (o.sampling_mode) c.sampling_mode = *o.sampling_mode;
    if (o.shared_proxy_seed) c.shared_proxy_seed = *o.shared_proxy_seed;
    c.seed = trial_seed;
    return c;
}

OfflineDataset experiment_dataset(const ExperimentConfig& config, const OracleTask& task) {
    if (!config.data_path.empty()) {
        OfflineDataset d = load_dataset_csv(config.data_path);
        if (d.dim() != task.dim())
            throw std::invalid_argument(config.data_path + ": " + std::to_string(d.dim()) +
                                        " design columns, task '" + task.name() + "' expects " +
                                        std::to_string(task.dim()));
        return d;
    }
    DatasetOptions opts;
    opts.n = config.dataset_size.value_or(task.kind() == TaskKind::discrete ? 2000 : 1000);
    opts.exclude_top = config.exclude_top;
    opts.seed = config.data_seed;
    return make_offline_dataset(task, opts);
}

MeanSe mean_and_se(const std::vector<double>& values) {
    if (values.empty()) throw std::invalid_argument("mean_and_se: no values");
    MeanSe r;
    const double n = static_cast<double>(values.size());
    double sum = 0.0;
    for (double v : values) sum += v;
    r.mean = sum / n;
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - r.mean) * (v - r.mean);
        r.se = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
    }
    return r;
}

double median_of(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("median_of: no values");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

namespace {

nlohmann::json config_echo(const ExperimentConfig& config, const OracleTask& task, const OfflineDataset& data) {
    const IctConfig c = resolve_ict_config(config, task, 0);
    nlohmann::json j;
    j["task"] = config.task;
    j["method"] = config.method;
    j["trials"] = config.trial_seeds().size();
    j["seeds"] = config.trial_seeds();
    j["dataset"] = {{"size", data.size()},
                    {"exclude_top", config.exclude_top},
                    {"data_seed", config.data_seed},
                    {"path", config.data_path}};
    j["T"] = c.T;
    j["M"] = c.M;
    j["K"] = c.K;
    j["gamma"] = c.gamma ? nlohmann::json(*c.gamma) : nlohmann::json("auto");
    j["eta"] = c.eta;
    j["alpha"] = c.alpha;
    j["beta"] = c.beta;
    j["sampling_mode"] = to_string(c.sampling_mode);
    j["n_starts"] = c.n_starts;
    j["meta_batch"] = c.meta_batch;
    j["shared_proxy_seed"] = c.shared_proxy_seed;
    j["proxy"] = {{"hidden", c.train.hidden},
                  {"epochs", c.train.epochs},
                  {"batch_size", c.train.batch_size},
                  {"lr", c.train.lr}};
    j["task_extremes"] = {{"y_min", task.y_min()}, {"y_max", task.y_max()}, {"source", task.extremes_source()}};
    return j;
}

MethodResult run_method(const std::string& method, const OracleTask& task, const OfflineDataset& data,
                        const IctConfig& cfg) {
    if (method == "ict") return run_ict(task, data, cfg);
    if (method == "grad") return run_grad(task, data, cfg);
    if (method == "mean") return run_ensemble(task, data, cfg, EnsembleMode::mean);
    if (method == "min") return run_ensemble(task, data, cfg, EnsembleMode::min);
    throw std::invalid_argument("unknown method '" + method + "'");
}

}  // namespace

RunReport run_experiment(const ExperimentConfig& config) {
    config.validate();
    const OracleTask& task = find_task(config.task);
    // Resolve every trial's settings up front so bad overrides fail before compute.
    const std::vector<std::uint64_t> seeds = config.trial_seeds();
    for (std::uint64_t s : seeds)
        resolve_ict_config(config, task, s).validate(config.method == "ict" ? 1 : 0);
    const OfflineDataset data = experiment_dataset(config, task);

    const auto started = std::chrono::steady_clock::now();
    OracleAudit& audit = oracle_audit();
    audit.set_strict(true);
    const std::uint64_t violations_before = audit.violations();

    RunReport report;
    report.task = config.task;
    report.method = config.method;
    report.config = config_echo(config, task, data);
    report.trials.resize(seeds.size());

    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr error;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= seeds.size()) return;
            try {
                const auto t0 = std::chrono::steady_clock::now();
                const IctConfig cfg = resolve_ict_config(config, task, seeds[i]);
                const MethodResult r = run_method(config.method, task, data, cfg);
                TrialReport& tr = report.trials[i];
                tr.seed = seeds[i];
                const std::vector<double> scores(r.normalized.data(), r.normalized.data() + r.normalized.size());
                tr.best = *std::max_element(scores.begin(), scores.end());
                tr.median = median_of(scores);
                tr.gamma_used = r.gamma_used;
                tr.eta_used = r.eta_used;
                tr.above_reference_max = tr.best > 1.0;
                tr.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                if (i == 0) report.dataset_best_normalized = r.dataset_best_normalized;
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                next.store(seeds.size());
                return;
            }
        }
    };
    const int n_workers = std::min<int>(config.workers, static_cast<int>(seeds.size()));
    if (n_workers <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    }
    if (error) std::rethrow_exception(error);

    report.oracle_violations = audit.violations() - violations_before;
    if (report.oracle_violations != 0) throw OracleHygieneError("oracle queried outside evaluation");

    std::sort(report.trials.begin(), report.trials.end(),
              [](const TrialReport& a, const TrialReport& b) { return a.seed < b.seed; });
    std::vector<double> best, median;
    for (const auto& t : report.trials) {
        best.push_back(t.best);
        median.push_back(t.median);
    }
    report.best = mean_and_se(best);
    report.median = mean_and_se(median);
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return report;
}

SweepParam sweep_param_from_string(const std::string& name) {
    if (name == "K") return SweepParam::K;
    if (name == "beta") return SweepParam::beta;
    if (name == "alpha") return SweepParam::alpha;
    throw std::invalid_argument("unknown sweep parameter '" + name + "' (expected K, beta or alpha)");
}

std::string to_string(SweepParam param) {
    switch (param) {
        case SweepParam::K: return "K";
        case SweepParam::beta: return "beta";
        case SweepParam::alpha: return "alpha";
    }
    return "?";
}

std::vector<RunReport> sweep(const ExperimentConfig& config, SweepParam param, const std::vector<double>& values) {
    if (values.empty()) throw std::invalid_argument("sweep: no values");
    std::vector<ExperimentConfig> configs;
    for (double v : values) {
        ExperimentConfig c = config;
        switch (param) {
            case SweepParam::K:
                if (v < 1 || v != std::floor(v)) throw std::invalid_argument("sweep: K values must be positive integers");
                c.overrides.K = static_cast<int>(v);
                break;
            case SweepParam::beta: c.overrides.beta = v; break;
            case SweepParam::alpha: c.overrides.alpha = v; break;
        }
        c.validate();
        configs.push_back(std::move(c));
    }
    std::vector<RunReport> out;
    for (const auto& c : configs) out.push_back(run_experiment(c));
    return out;
}

std::vector<MethodRank> rank_table(const std::vector<RunReport>& reports) {
    if (reports.empty()) throw std::invalid_argument("rank_table: no reports");
    std::map<std::string, std::map<std::string, double>> by_task;  // task -> method -> mean best
    std::vector<std::string> methods;
    for (const auto& r : reports) {
        auto& cell = by_task[r.task];
        if (cell.count(r.method)) throw std::invalid_argument("rank_table: duplicate cell " + r.task + " x " + r.method);
        cell[r.method] = r.best.mean;
        if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
    }
    std::map<std::string, std::vector<double>> ranks;
    for (const auto& [task, cells] : by_task) {
        for (const auto& m : methods)
            if (!cells.count(m)) throw std::invalid_argument("rank_table: missing cell " + task + " x " + m);
        for (const auto& m : methods) {
            const double v = cells.at(m);
            int better = 0, tied = 0;
            for (const auto& [other, ov] : cells) {
                if (ov > v) ++better;
                else if (ov == v) ++tied;  // includes m itself
            }
            ranks[m].push_back(better + (tied + 1) / 2.0);
        }
    }
    std::vector<MethodRank> out;
    for (const auto& m : methods) {
        const auto& r = ranks[m];
        double sum = 0.0;
        for (double x : r) sum += x;
        out.push_back({m, sum / static_cast<double>(r.size()), median_of(r)});
    }
    return out;
}

}  // namespace ict
