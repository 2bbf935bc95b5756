// Command-line front end: run, sweep, rank, gen-data, check.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ict/harness.hpp"
#include "ict/self_check.hpp"

namespace {

using ict::ExperimentConfig;

struct ExitError {
    int code;
    std::string kind;
    std::string message;
};

void print_error(const std::string& kind, const std::string& message) {
    nlohmann::json rec{{"error", {{"kind", kind}, {"message", message}}}};
    std::cerr << rec.dump() << "\n";
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

// `key = value` lines become `--key value` arguments placed before the real
// ones, so command-line flags win.
std::vector<std::string> config_file_args(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ExitError{2, "config", "cannot open config file '" + path + "'"};
    std::vector<std::string> args;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ExitError{2, "config", path + ":" + std::to_string(lineno) + ": expected key = value"};
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ExitError{2, "config", path + ":" + std::to_string(lineno) + ": empty key"};
        args.push_back("--" + key);
        if (value != "true") args.push_back(value);
    }
    return args;
}

struct CommonFlags {
    ExperimentConfig cfg;
    std::optional<int> T, M, K, n_starts, hidden, epochs, meta_batch;
    std::optional<double> gamma, eta, alpha, beta, train_lr;
    std::optional<std::string> sampling_mode;
    std::optional<int> dataset_size;
    bool shared_proxy_seed = false;
    std::string out;
    std::string format = "json";

    void attach(CLI::App* app) {
        app->add_option("--task", cfg.task, "Task name")->required();
        app->add_option("--method", cfg.method, "ict, grad, mean or min");
        app->add_option("--trials", cfg.trials, "Number of seeded trials");
        app->add_option("--seed", cfg.base_seed, "Base seed; trial i uses seed + i");
        app->add_option("--seeds", cfg.seeds, "Explicit trial seeds (overrides --trials/--seed)")->delimiter(',');
        app->add_option("--T", T, "Iterations");
        app->add_option("--M", M, "Pseudo-labeled points per round");
        app->add_option("--K", K, "Small-loss samples exchanged");
        app->add_option("--gamma", gamma, "Pseudo-point noise scale");
        app->add_option("--eta", eta, "Design ascent rate");
        app->add_option("--alpha", alpha, "Fine-tune rate");
        app->add_option("--beta", beta, "Sample-weight rate");
        app->add_option("--n-starts", n_starts, "Starting designs per trial");
        app->add_option("--sampling-mode", sampling_mode, "around-current-point or around-offline-dataset");
        app->add_option("--hidden", hidden, "Proxy hidden width");
        app->add_option("--epochs", epochs, "Proxy training epochs");
        app->add_option("--train-lr", train_lr, "Proxy training rate");
        app->add_option("--meta-batch", meta_batch, "Offline rows per weight update");
        app->add_flag("--shared-proxy-seed", shared_proxy_seed, "Initialize all proxies from one seed");
        app->add_option("--n", dataset_size, "Offline dataset size");
        app->add_option("--exclude-top", cfg.exclude_top, "Fraction of top designs withheld");
        app->add_option("--data-seed", cfg.data_seed, "Dataset generation seed");
        app->add_option("--data", cfg.data_path, "Load the offline dataset from CSV");
        app->add_option("--workers", cfg.workers, "Concurrent trials");
        app->add_option("--out", out, "Output path (stdout when omitted)");
        app->add_option("--format", format, "json, csv or markdown");
    }

    ExperimentConfig build() const {
        ExperimentConfig c = cfg;
        auto& o = c.overrides;
        o.T = T;
        o.M = M;
        o.K = K;
        o.n_starts = n_starts;
        o.hidden = hidden;
        o.epochs = epochs;
        o.meta_batch = meta_batch;
        o.gamma = gamma;
        o.eta = eta;
        o.alpha = alpha;
        o.beta = beta;
        o.train_lr = train_lr;
        if (sampling_mode) o.sampling_mode = ict::sampling_mode_from_string(*sampling_mode);
        if (shared_proxy_seed) o.shared_proxy_seed = true;
        c.dataset_size = dataset_size;
        return c;
    }
};

void write_output(const std::string& text, const std::string& path) {
    if (path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

std::string sweep_markdown(ict::SweepParam param, const std::vector<double>& values,
                           const std::vector<ict::RunReport>& reports) {
    std::ostringstream out;
    out << "| task | method | " << ict::to_string(param) << " | 100th pct (mean ± se) | 50th pct (mean ± se) |\n";
    out << "|---|---|---|---|---|\n";
    for (std::size_t i = 0; i < reports.size(); ++i) {
        const auto& r = reports[i];
        auto cell = [](const ict::MeanSe& m) {
            char buf[64];
            if (m.se)
                std::snprintf(buf, sizeof buf, "%.3f ± %.3f", m.mean, *m.se);
            else
                std::snprintf(buf, sizeof buf, "%.3f", m.mean);
            return std::string(buf);
        };
        out << "| " << r.task << " | " << r.method << " | " << values[i] << " | " << cell(r.best) << " | "
            << cell(r.median) << " |\n";
    }
    return out.str();
}

int dispatch(int argc, char** argv) {
    // Splice in the config file, if any, ahead of the explicit flags.
    std::vector<std::string> args;
    std::string config_path;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--config" && i + 1 < argc) {
            config_path = argv[++i];
        } else if (a.rfind("--config=", 0) == 0) {
            config_path = a.substr(9);
        } else {
            args.push_back(a);
        }
    }
    if (!config_path.empty() && !args.empty()) {
        auto extra = config_file_args(config_path);
        args.insert(args.begin() + 1, extra.begin(), extra.end());
    }

    CLI::App app{"Co-teaching proxy ensembles for offline design optimization"};
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.add_option("--config", config_path, "Key-value config file; flags override it");

    CommonFlags run_flags;
    auto* run = app.add_subcommand("run", "Run one experiment");
    run_flags.attach(run);

    CommonFlags sweep_flags;
    std::string sweep_param = "K";
    std::vector<double> sweep_values;
    auto* sweep = app.add_subcommand("sweep", "Sweep K, beta or alpha");
    sweep_flags.attach(sweep);
    sweep->add_option("--param", sweep_param, "K, beta or alpha");
    sweep->add_option("--values", sweep_values, "Comma-separated values")->delimiter(',')->required();

    std::vector<std::string> rank_inputs;
    std::string rank_out, rank_format = "markdown";
    auto* rank = app.add_subcommand("rank", "Mean and median ranks from report files");
    rank->add_option("reports", rank_inputs, "Report json files")->required();
    rank->add_option("--out", rank_out, "Output path");
    rank->add_option("--format", rank_format, "markdown or json");

    std::string gen_task, gen_out;
    int gen_n = 0;
    double gen_exclude = 0.2;
    std::uint64_t gen_seed = 0;
    auto* gen = app.add_subcommand("gen-data", "Write an offline dataset as CSV");
    gen->add_option("--task", gen_task, "Task name")->required();
    gen->add_option("--n", gen_n, "Number of designs (default by task kind)");
    gen->add_option("--exclude-top", gen_exclude, "Fraction of top designs withheld");
    gen->add_option("--seed", gen_seed, "Generation seed");
    gen->add_option("--out", gen_out, "CSV path")->required();

    unsigned check_seed = 0;
    auto* check = app.add_subcommand("check", "Gradient, meta-gradient and selection self-tests");
    check->add_option("--seed", check_seed, "Instance seed");

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        throw ExitError{2, "usage", e.what()};
    }

    if (*run) {
        const ExperimentConfig cfg = run_flags.build();
        const auto format = ict::report_format_from_string(run_flags.format);
        const ict::RunReport report = ict::run_experiment(cfg);
        std::cerr << "wall-clock " << report.wall_seconds << " s\n";
        write_output(ict::render({report}, format), run_flags.out);
        return 0;
    }
    if (*sweep) {
        const ExperimentConfig cfg = sweep_flags.build();
        const auto param = ict::sweep_param_from_string(sweep_param);
        const auto format = ict::report_format_from_string(sweep_flags.format);
        const auto reports = ict::sweep(cfg, param, sweep_values);
        const std::string text = format == ict::ReportFormat::markdown
                                     ? sweep_markdown(param, sweep_values, reports)
                                     : ict::render(reports, format);
        write_output(text, sweep_flags.out);
        return 0;
    }
    if (*rank) {
        std::vector<ict::RunReport> all;
        for (const auto& path : rank_inputs) {
            auto r = ict::read_reports(path);
            all.insert(all.end(), r.begin(), r.end());
        }
        const auto ranks = ict::rank_table(all);
        if (rank_format == "json") {
            nlohmann::json j = nlohmann::json::array();
            for (const auto& r : ranks)
                j.push_back({{"method", r.method}, {"mean_rank", r.mean_rank}, {"median_rank", r.median_rank}});
            write_output(j.dump(2) + "\n", rank_out);
        } else {
            write_output(ict::rank_markdown(ranks), rank_out);
        }
        return 0;
    }
    if (*gen) {
        const auto& task = ict::find_task(gen_task);
        ict::DatasetOptions opts;
        opts.n = gen_n > 0 ? gen_n : (task.kind() == ict::TaskKind::discrete ? 2000 : 1000);
        opts.exclude_top = gen_exclude;
        opts.seed = gen_seed;
        ict::save_dataset_csv(ict::make_offline_dataset(task, opts), gen_out);
        return 0;
    }
    if (*check) {
        bool ok = true;
        for (const auto& r : ict::run_self_checks(check_seed)) {
            std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << "\n";
            ok = ok && r.passed;
        }
        return ok ? 0 : 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return dispatch(argc, argv);
    } catch (const ExitError& e) {
        print_error(e.kind, e.message);
        return e.code;
    } catch (const ict::OracleHygieneError& e) {
        print_error("oracle_hygiene", e.what());
        return 3;
    } catch (const std::invalid_argument& e) {
        print_error("invalid_argument", e.what());
        return 2;
    } catch (const std::exception& e) {
        print_error("runtime", e.what());
        return 1;
    }
}
