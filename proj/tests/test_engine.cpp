#include <doctest.h>

#include <algorithm>
#include <array>
#include <numeric>

#include "ict/engine.hpp"
#include "oracles.hpp"

using namespace ict;

namespace {

EnsembleState random_ensemble(int d, int h, std::uint64_t seed) {
    EnsembleState s;
    for (int i = 0; i < kEnsembleSize; ++i) {
        s.proxies[i] = init_proxy(d, h, seed + static_cast<std::uint64_t>(i));
        s.optimizers[i] = make_optimizer_state(OptimizerKind::plain_sgd, s.proxies[i]);
    }
    return s;
}

EnsembleState identical_ensemble(int d, int h, std::uint64_t seed) {
    EnsembleState s;
    for (int i = 0; i < kEnsembleSize; ++i) {
        s.proxies[i] = init_proxy(d, h, seed);
        s.optimizers[i] = make_optimizer_state(OptimizerKind::plain_sgd, s.proxies[i]);
    }
    return s;
}

OfflineDataset small_dataset(const std::string& task, int n, std::uint64_t seed) {
    DatasetOptions opts;
    opts.n = n;
    opts.seed = seed;
    return make_offline_dataset(find_task(task), opts);
}

IctConfig small_config() {
    IctConfig c = IctConfig::defaults_for(TaskKind::continuous);
    c.T = 2;
    c.M = 16;
    c.K = 8;
    c.n_starts = 2;
    c.train.hidden = 8;
    c.train.epochs = 5;
    c.meta_batch = 32;
    c.seed = 3;
    return c;
}

SelectedBatch random_selection(int d, int k, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> normal;
    SelectedBatch s;
    s.designs = Matrix::NullaryExpr(k, d, [&] { return normal(rng); });
    s.labels = Vector::NullaryExpr(k, [&] { return normal(rng); });
    s.indices.resize(static_cast<std::size_t>(k));
    std::iota(s.indices.begin(), s.indices.end(), 0);
    return s;
}

OfflineDataset random_offline(int d, int n, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> normal;
    OfflineDataset o;
    o.designs = Matrix::NullaryExpr(n, d, [&] { return normal(rng); });
    o.scores = Vector::NullaryExpr(n, [&] { return normal(rng); });
    return o;
}

}  // namespace

TEST_CASE("config defaults and validation") {
    const IctConfig c = IctConfig::defaults_for(TaskKind::continuous);
    CHECK(c.T == 200);
    CHECK(c.beta == 0.2);
    CHECK(c.M == 128);
    CHECK(c.K == 64);
    CHECK(IctConfig::defaults_for(TaskKind::discrete).T == 100);
    CHECK(IctConfig::defaults_for(TaskKind::discrete).beta == 0.3);
    IctConfig bad = c;
    bad.K = bad.M + 1;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = c;
    bad.T = 0;
    CHECK_THROWS_AS(bad.validate(1), std::invalid_argument);
    CHECK_NOTHROW(bad.validate(0));
    bad = c;
    bad.gamma = -1.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    CHECK(sampling_mode_from_string(to_string(SamplingMode::around_offline_dataset)) ==
          SamplingMode::around_offline_dataset);
    CHECK_THROWS_AS(sampling_mode_from_string("nearby"), std::invalid_argument);
}

TEST_CASE("ensemble gradient is the mean of the proxy gradients") {
    const EnsembleState s = random_ensemble(4, 8, 10);
    const Vector x = Vector::LinSpaced(4, -0.5, 0.5);
    const Vector expected =
        (input_grad(s.proxies[0], x) + input_grad(s.proxies[1], x) + input_grad(s.proxies[2], x)) / 3.0;
    CHECK((ensemble_mean_input_grad(s, x) - expected).cwiseAbs().maxCoeff() < 1e-12);

    const EnsembleState same = identical_ensemble(4, 8, 10);
    CHECK((ensemble_mean_input_grad(same, x) - input_grad(same.proxies[0], x)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("ascent step moves along the mean gradient and respects the box") {
    const auto& space = find_task("quadratic-bowl-8d").space();
    const EnsembleState s = random_ensemble(8, 8, 1);
    const Vector x = Vector::Constant(8, 0.1);
    CHECK(ensemble_ascend_step(s, x, 0.0, space) == x);
    const Vector step = ensemble_ascend_step(s, x, 0.01, space);
    CHECK((step - (x + 0.01 * ensemble_mean_input_grad(s, x))).cwiseAbs().maxCoeff() < 1e-15);
    const Vector far = ensemble_ascend_step(s, x, 1e6, space);
    CHECK(far.maxCoeff() <= 2.0);
    CHECK(far.minCoeff() >= -2.0);
}

TEST_CASE("pseudo points around the current design") {
    Rng rng(1);
    const Vector c = Vector::LinSpaced(3, -1.0, 1.0);
    const Matrix zero = sample_around_point(c, 0.0, 5, rng);
    for (int i = 0; i < 5; ++i) CHECK(zero.row(i).transpose() == c);

    const int m = 10000;
    const double gamma = 0.3;
    Rng r2(2);
    const Matrix pts = sample_around_point(c, gamma, m, r2);
    const Eigen::RowVectorXd mean = pts.colwise().mean();
    for (int j = 0; j < 3; ++j) CHECK(std::abs(mean(j) - c(j)) < 5 * gamma / std::sqrt(double(m)));

    Rng a(7), b(7);
    CHECK(sample_around_point(c, gamma, 10, a) == sample_around_point(c, gamma, 10, b));
    CHECK_THROWS_AS(sample_around_point(c, gamma, 0, a), std::invalid_argument);
}

TEST_CASE("pseudo points around the offline designs") {
    const Matrix designs = Matrix::Random(6, 2);
    Rng rng(3);
    const Matrix pts = sample_around_dataset(designs, 0.0, 20, rng);
    for (int i = 0; i < 20; ++i) {
        bool found = false;
        for (int r = 0; r < 6; ++r) found = found || pts.row(i) == designs.row(r);
        CHECK(found);
    }
    Rng r2(3);
    CHECK(sample_pseudo_points(SamplingMode::around_offline_dataset, Vector::Zero(2), designs, 0.0, 20, r2) ==
          pts);
    Rng r3(3);
    CHECK_THROWS_AS(sample_pseudo_points(SamplingMode::around_current_point, Vector::Zero(2), designs, -1.0, 2, r3),
                    std::invalid_argument);
}

TEST_CASE("pseudo labels come from the labeler") {
    const EnsembleState s = random_ensemble(3, 6, 4);
    const Matrix pts = Matrix::Random(9, 3);
    const PseudoBatch b = pseudo_label(s, 1, pts);
    CHECK(b.labeler_index == 1);
    CHECK(b.labels == forward(s.proxies[1], pts));
    CHECK_THROWS_AS(pseudo_label(s, 3, pts), std::invalid_argument);
}

TEST_CASE("small-loss selection equals brute force") {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        Rng rng(seed);
        std::uniform_int_distribution<int> pick_m(1, 64);
        const int m = pick_m(rng);
        std::uniform_int_distribution<int> pick_k(1, m);
        const int k = pick_k(rng);
        const EnsembleState s = random_ensemble(3, 5, seed * 7);
        Matrix pts = Matrix::Random(m, 3);
        const PseudoBatch b = pseudo_label(s, 0, pts);
        const SelectedBatch sel = select_small_loss(s.proxies[1], b, k);
        const Vector losses = (forward(s.proxies[1], b.points) - b.labels).cwiseAbs2();
        REQUIRE(sel.indices == oracle::k_smallest(losses, k));
        for (int i = 0; i < k; ++i) {
            CHECK(sel.designs.row(i) == b.points.row(sel.indices[i]));
            CHECK(sel.labels(i) == b.labels(sel.indices[i]));
        }
    }
}

TEST_CASE("selection by the labeler itself keeps the first K") {
    const EnsembleState s = random_ensemble(2, 4, 1);
    const PseudoBatch b = pseudo_label(s, 2, Matrix::Random(10, 2));
    const SelectedBatch sel = select_small_loss(s.proxies[2], b, 4);
    CHECK(sel.indices == std::vector<int>{0, 1, 2, 3});
    const SelectedBatch all = select_small_loss(s.proxies[0], b, 10);
    CHECK(all.size() == 10);
    CHECK_THROWS_AS(select_small_loss(s.proxies[0], b, 11), std::invalid_argument);
    CHECK_THROWS_AS(select_small_loss(s.proxies[0], b, 0), std::invalid_argument);
}

TEST_CASE("weighted fine-tune step") {
    const ProxyParams p = init_proxy(3, 6, 2);
    const SelectedBatch sel = random_selection(3, 5, 1);
    CHECK(weighted_finetune_step(p, sel, {Vector::Zero(5)}, 0.1) == p);

    const auto lg = mse_grad(p, sel.designs, sel.labels);
    const ProxyParams tuned = weighted_finetune_step(p, sel, SampleWeights::ones(5), 0.1);
    CHECK(oracle::relative_error(oracle::flatten(tuned), oracle::flatten(p) - 0.1 * oracle::flatten(lg.grad)) <
          1e-15);

    CHECK_THROWS_AS(weighted_finetune_step(p, sel, SampleWeights::ones(4), 0.1), std::invalid_argument);
    CHECK_THROWS_AS(weighted_finetune_step(p, sel, {Vector::Constant(5, -1.0)}, 0.1), std::invalid_argument);
}

TEST_CASE("fine-tune of a scalar linear model") {
    // identity-like chain: f(x) = w1 * x for w1, x > 0. x = 2, label 0, w1 = 1:
    // dL/dw1 = 2 * (2 - 0) * 2 = 8, so one step of 0.1 lands on 0.2.
    const ProxyParams p = oracle::chain(1, 0, 1, 0, 1, 0);
    SelectedBatch sel;
    sel.indices = {0};
    sel.designs = Matrix::Constant(1, 1, 2.0);
    sel.labels = Vector::Zero(1);
    const ProxyParams tuned = weighted_finetune_step(p, sel, SampleWeights::ones(1), 0.1);
    CHECK(tuned.layers[0].weight(0, 0) == doctest::Approx(0.2).epsilon(1e-14));
}

TEST_CASE("meta weight gradient matches finite differences of the composed loss") {
    const double h = 1e-5;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        std::uniform_int_distribution<int> dim(1, 6), hid(2, 12), k(1, 10);
        const int d = dim(rng);
        const ProxyParams p = init_proxy(d, hid(rng), seed + 50);
        const SelectedBatch sel = random_selection(d, k(rng), seed + 100);
        const OfflineDataset off = random_offline(d, 16, seed + 200);
        std::uniform_real_distribution<double> u(0.2, 1.5);
        SampleWeights w{Vector::NullaryExpr(sel.size(), [&] { return u(rng); })};
        const double alpha = 0.05;

        auto composed = [&](const Vector& omega) {
            return mse(weighted_finetune_step(p, sel, {omega}, alpha), off.designs, off.scores);
        };
        Vector fd(sel.size());
        for (int i = 0; i < sel.size(); ++i) {
            Vector up = w.values, down = w.values;
            up(i) += h;
            down(i) -= h;
            fd(i) = (composed(up) - composed(down)) / (2 * h);
        }
        const Vector g = meta_weight_gradient(p, sel, w, off, alpha);
        CHECK(oracle::relative_error(g, fd) < 1e-4);

        const double beta = 0.7;
        const SampleWeights upd = meta_update_weights(p, sel, w, off, alpha, beta);
        CHECK((upd.values - (w.values - beta * fd).cwiseMax(0.0)).cwiseAbs().maxCoeff() < 1e-4 * beta * fd.norm() + 1e-15);
    }
}

TEST_CASE("meta update with zero rate keeps the weights") {
    const ProxyParams p = init_proxy(2, 4, 1);
    const SelectedBatch sel = random_selection(2, 6, 3);
    const OfflineDataset off = random_offline(2, 8, 4);
    const SampleWeights w = SampleWeights::ones(6);
    CHECK(meta_update_weights(p, sel, w, off, 0.01, 0.0).values == w.values);
}

TEST_CASE("meta update raises weights whose gradient agrees with the offline gradient") {
    const ProxyParams p = init_proxy(2, 6, 9);
    const SelectedBatch sel = random_selection(2, 8, 5);
    const OfflineDataset off = random_offline(2, 16, 6);
    const SampleWeights w = SampleWeights::ones(8);
    const double alpha = 1e-3;
    const SampleWeights upd = meta_update_weights(p, sel, w, off, alpha, 1.0);
    const ProxyParams tuned = weighted_finetune_step(p, sel, w, alpha);
    const Gradient g_off = mse_grad(tuned, off.designs, off.scores).grad;
    for (int i = 0; i < 8; ++i) {
        const Matrix xi = sel.designs.row(i);
        const Vector yi = sel.labels.segment(i, 1);
        const double agree = g_off.dot(mse_grad(p, xi, yi).grad);
        if (agree > 1e-12) CHECK(upd.values(i) > 1.0);
        if (agree < -1e-12) CHECK(upd.values(i) < 1.0);
        CHECK(upd.values(i) >= 0.0);
    }
}

TEST_CASE("subround leaves the labeler untouched and is deterministic") {
    const OfflineDataset data = random_offline(3, 40, 1);
    IctConfig cfg = small_config();
    cfg.gamma = 0.2;
    const EnsembleState s = random_ensemble(3, 6, 20);
    const Vector x = Vector::Zero(3);
    for (int labeler = 0; labeler < kEnsembleSize; ++labeler) {
        const auto a = ict_subround(s, labeler, x, data, cfg, {11, 12});
        const auto b = ict_subround(s, labeler, x, data, cfg, {11, 12});
        CHECK(a.state.proxies[labeler] == s.proxies[labeler]);
        for (int r : a.trace.recipients) CHECK_FALSE(a.state.proxies[r] == s.proxies[r]);
        CHECK(a.state == b.state);
        CHECK(a.trace.batch.labeler_index == labeler);
        CHECK(a.trace.batch.points.rows() == cfg.M);
        CHECK(a.trace.selections[0].size() == cfg.K);
        CHECK(a.trace.offline_batch.size() == 32);
    }
    IctConfig unresolved = cfg;
    unresolved.gamma.reset();
    CHECK_THROWS_AS(ict_subround(s, 0, x, data, unresolved, {1, 2}), std::invalid_argument);
}

TEST_CASE("subround with identical proxies and every sample selected changes nothing") {
    const OfflineDataset data = random_offline(3, 40, 2);
    IctConfig cfg = small_config();
    cfg.gamma = 0.5;
    cfg.K = cfg.M;
    const EnsembleState s = identical_ensemble(3, 6, 21);
    const auto out = ict_subround(s, 1, Vector::Zero(3), data, cfg, {5, 6});
    CHECK(out.state == s);
}

TEST_CASE("subround on a single noiseless point pulls recipients toward the label") {
    const OfflineDataset data = random_offline(2, 20, 3);
    IctConfig cfg = small_config();
    cfg.gamma = 0.0;
    cfg.M = 1;
    cfg.K = 1;
    cfg.beta = 0.0;
    cfg.alpha = 1e-3;
    const EnsembleState s = random_ensemble(2, 6, 30);
    const Vector x = Vector::Constant(2, 0.4);
    const auto out = ict_subround(s, 0, x, data, cfg, {1, 2});
    const double label = forward_one(s.proxies[0], x);
    CHECK(out.trace.batch.points.row(0).transpose() == x);
    for (int r : {1, 2}) {
        const double before = std::abs(forward_one(s.proxies[r], x) - label);
        const double after = std::abs(forward_one(out.state.proxies[r], x) - label);
        CHECK(after < before);
    }
}

TEST_CASE("subround commutes with relabeling the proxies") {
    const OfflineDataset data = random_offline(3, 40, 4);
    IctConfig cfg = small_config();
    cfg.gamma = 0.3;
    cfg.beta = 0.5;
    cfg.alpha = 0.01;
    const EnsembleState s = random_ensemble(3, 6, 40);
    const Vector x = Vector::Constant(3, -0.2);
    std::array<int, 3> perm{0, 1, 2};
    do {
        EnsembleState t;
        for (int i = 0; i < 3; ++i) {
            t.proxies[perm[i]] = s.proxies[i];
            t.optimizers[perm[i]] = s.optimizers[i];
        }
        for (int labeler = 0; labeler < 3; ++labeler) {
            const auto base = ict_subround(s, labeler, x, data, cfg, {8, 9});
            const auto moved = ict_subround(t, perm[labeler], x, data, cfg, {8, 9});
            for (int i = 0; i < 3; ++i) CHECK(moved.state.proxies[perm[i]] == base.state.proxies[i]);
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
}

TEST_CASE("default gamma is a tenth of the mean column spread") {
    Matrix d(4, 2);
    d << 0, 0, 2, 0, 0, 4, 2, 4;  // column stddevs 1 and 2
    CHECK(default_gamma(d) == doctest::Approx(0.15));
}

TEST_CASE("prepare_run picks the best rows and standardizes scores") {
    const auto& task = find_task("quadratic-bowl-8d");
    const OfflineDataset data = small_dataset("quadratic-bowl-8d", 60, 1);
    IctConfig cfg = small_config();
    cfg.n_starts = 3;
    const PreparedRun prep = prepare_run(task, data, cfg);
    Eigen::Index best;
    data.scores.maxCoeff(&best);
    CHECK(prep.start_rows[0] == best);
    CHECK(prep.starts.row(0) == data.designs.row(best));
    CHECK(data.scores(prep.start_rows[1]) <= data.scores(prep.start_rows[0]));
    CHECK(std::abs(prep.training_view.scores.mean()) < 1e-12);
    CHECK(prep.gamma == doctest::Approx(default_gamma(data.designs)));
}

TEST_CASE("run_ict loop counts and start design") {
    const auto& task = find_task("quadratic-bowl-8d");
    const OfflineDataset data = small_dataset("quadratic-bowl-8d", 60, 2);
    IctConfig cfg = small_config();
    cfg.T = 1;
    const IctResult r = run_ict(task, data, cfg);
    CHECK(r.counters.subrounds == 3 * cfg.n_starts);
    CHECK(r.counters.interleaved_steps == cfg.n_starts);
    CHECK(r.counters.final_steps == cfg.n_starts);
    Eigen::Index best;
    data.scores.maxCoeff(&best);
    CHECK(r.starts.row(0) == data.designs.row(best));
    CHECK(r.trajectories[0].front() == r.starts.row(0).transpose());
    CHECK(r.final_designs.rows() == cfg.n_starts);
    CHECK(r.normalized.size() == cfg.n_starts);
    CHECK(r.dataset_best_normalized == doctest::Approx(normalize_score(data.scores(best), task.y_min(), task.y_max())));

    IctConfig zero = cfg;
    zero.T = 0;
    CHECK_THROWS_AS(run_ict(task, data, zero), std::invalid_argument);
}

TEST_CASE("run_ict is deterministic and calls the hook per subround") {
    const auto& task = find_task("negated-ackley-10d");
    const OfflineDataset data = small_dataset("negated-ackley-10d", 50, 3);
    IctConfig cfg = small_config();
    int calls = 0;
    IctHooks hooks;
    hooks.on_subround = [&](int, int, const SubroundTrace&) {
        CHECK_FALSE(in_training_scope());
        ++calls;
    };
    const IctResult a = run_ict(task, data, cfg, hooks);
    const IctResult b = run_ict(task, data, cfg);
    CHECK(calls == 3 * cfg.T * cfg.n_starts);
    CHECK(a.final_designs == b.final_designs);
    CHECK(a.final_scores == b.final_scores);
}

TEST_CASE("diagnostics split the pseudo-label error by selection") {
    const auto& task = find_task("quadratic-bowl-8d");
    const OfflineDataset data = small_dataset("quadratic-bowl-8d", 40, 4);
    const ScoreScaler scaler = ScoreScaler::fit(data.scores);
    PseudoBatch b;
    b.points = data.designs.topRows(6);
    b.labels = scaler.apply(data.scores.head(6));
    SelectedBatch all;
    all.indices = {0, 1, 2, 3, 4, 5};
    const SelIgnLoss full = diagnostics_sel_ign(task, scaler, b, all);
    CHECK(std::abs(full.selected) < 1e-20);
    CHECK_FALSE(full.ignored.has_value());

    b.labels(4) += 2.0;
    SelectedBatch some;
    some.indices = {0, 1};
    const SelIgnLoss part = diagnostics_sel_ign(task, scaler, b, some);
    CHECK(std::abs(part.selected) < 1e-20);
    REQUIRE(part.ignored.has_value());
    CHECK(*part.ignored == doctest::Approx(1.0));  // 2^2 / 4
}
