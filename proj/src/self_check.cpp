#include "ict/self_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "ict/engine.hpp"

namespace ict {

namespace {

constexpr double kStep = 1e-5;

double relative_error(const Vector& a, const Vector& b) {
    const double scale = std::max({a.norm(), b.norm(), 1e-12});
    return (a - b).norm() / scale;
}

Vector flatten(const Gradient& g) {
    Vector out(g.parameter_count());
    Eigen::Index k = 0;
    for (const auto& l : g.layers) {
        for (Eigen::Index i = 0; i < l.weight.size(); ++i) out(k++) = l.weight.data()[i];
        for (Eigen::Index i = 0; i < l.bias.size(); ++i) out(k++) = l.bias(i);
    }
    return out;
}

// Central differences of the weighted loss over every parameter.
Vector fd_param_grad(const ProxyParams& p, const Matrix& xs, const Vector& ys, const Vector& w) {
    auto loss = [&](const ProxyParams& q) { return w.dot((forward(q, xs) - ys).cwiseAbs2()) / xs.rows(); };
    Vector out(p.parameter_count());
    Eigen::Index k = 0;
    ProxyParams q = p;
    auto sweep = [&](double* data, Eigen::Index n) {
        for (Eigen::Index i = 0; i < n; ++i) {
            const double orig = data[i];
            data[i] = orig + kStep;
            const double up = loss(q);
            data[i] = orig - kStep;
            const double down = loss(q);
            data[i] = orig;
            out(k++) = (up - down) / (2 * kStep);
        }
    };
    for (auto& l : q.layers) {
        sweep(l.weight.data(), l.weight.size());
        sweep(l.bias.data(), l.bias.size());
    }
    return out;
}

Vector fd_input_grad(const ProxyParams& p, const Vector& x) {
    Vector out(x.size());
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        Vector a = x, b = x;
        a(j) += kStep;
        b(j) -= kStep;
        out(j) = (forward_one(p, a) - forward_one(p, b)) / (2 * kStep);
    }
    return out;
}

struct Instance {
    ProxyParams params;
    Matrix xs;
    Vector ys;
    Vector weights;
};

Instance random_instance(Rng& rng) {
    std::uniform_int_distribution<int> dim(1, 8), hidden(1, 16), batch(1, 6);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 2.0);
    Instance in;
    const int d = dim(rng);
    const int h = hidden(rng);
    const int n = batch(rng);
    in.params = init_proxy(d, h, rng());
    for (auto& l : in.params.layers) l.bias = l.bias.unaryExpr([&](double) { return 0.1 * normal(rng); });
    in.xs = Matrix::NullaryExpr(n, d, [&]() { return normal(rng); });
    in.ys = Vector::NullaryExpr(n, [&]() { return normal(rng); });
    in.weights = Vector::NullaryExpr(n, [&]() { return unit(rng); });
    return in;
}

CheckResult check_gradients(Rng& rng) {
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const Instance in = random_instance(rng);
        const Vector analytic = flatten(weighted_mse_grad(in.params, in.xs, in.ys, in.weights).grad);
        worst = std::max(worst, relative_error(analytic, fd_param_grad(in.params, in.xs, in.ys, in.weights)));
        const Vector x = in.xs.row(0).transpose();
        worst = std::max(worst, relative_error(input_grad(in.params, x), fd_input_grad(in.params, x)));
    }
    std::ostringstream d;
    d << "worst relative error " << worst << " (limit 1e-5)";
    return {"gradient-exactness", worst <= 1e-5, d.str()};
}

CheckResult check_meta_gradient(Rng& rng) {
    double worst = 0.0;
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        const Instance in = random_instance(rng);
        SelectedBatch sel;
        sel.designs = in.xs;
        sel.labels = in.ys;
        sel.indices.resize(static_cast<std::size_t>(in.xs.rows()));
        std::iota(sel.indices.begin(), sel.indices.end(), 0);
        OfflineDataset offline;
        offline.designs = Matrix::NullaryExpr(8, in.xs.cols(), [&]() { return normal(rng); });
        offline.scores = Vector::NullaryExpr(8, [&]() { return normal(rng); });
        const double alpha = 0.05;
        const SampleWeights w{in.weights};

        const Vector analytic = meta_weight_gradient(in.params, sel, w, offline, alpha);
        Vector numeric(w.values.size());
        for (Eigen::Index i = 0; i < w.values.size(); ++i) {
            auto objective = [&](double delta) {
                SampleWeights p = w;
                p.values(i) += delta;
                const ProxyParams tuned = weighted_finetune_step(in.params, sel, p, alpha);
                return mse(tuned, offline.designs, offline.scores);
            };
            numeric(i) = (objective(kStep) - objective(-kStep)) / (2 * kStep);
        }
        worst = std::max(worst, relative_error(analytic, numeric));
    }
    std::ostringstream d;
    d << "worst relative error " << worst << " (limit 1e-4)";
    return {"meta-gradient-exactness", worst <= 1e-4, d.str()};
}

CheckResult check_selection(Rng& rng) {
    std::uniform_int_distribution<int> msize(1, 64);
    std::normal_distribution<double> normal(0.0, 1.0);
    int mismatches = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const int m = msize(rng);
        std::uniform_int_distribution<int> kdist(1, m);
        const int k = kdist(rng);
        const ProxyParams evaluator = init_proxy(3, 4, rng());
        PseudoBatch batch;
        batch.points = Matrix::NullaryExpr(m, 3, [&]() { return normal(rng); });
        batch.labels = Vector::NullaryExpr(m, [&]() { return normal(rng); });
        const SelectedBatch sel = select_small_loss(evaluator, batch, k);

        const Vector pred = forward(evaluator, batch.points);
        std::vector<std::pair<double, int>> all;
        for (int i = 0; i < m; ++i) all.emplace_back(std::pow(pred(i) - batch.labels(i), 2), i);
        std::sort(all.begin(), all.end());
        std::vector<int> expected;
        for (int i = 0; i < k; ++i) expected.push_back(all[static_cast<std::size_t>(i)].second);
        std::sort(expected.begin(), expected.end());
        if (expected != sel.indices) ++mismatches;
    }
    return {"selection-oracle", mismatches == 0, std::to_string(mismatches) + " mismatches in 200 instances"};
}

}  // namespace

std::vector<CheckResult> run_self_checks(unsigned seed) {
    Rng rng(seed);
    return {check_gradients(rng), check_meta_gradient(rng), check_selection(rng)};
}

}  // namespace ict
