#include <doctest.h>

#include <cmath>
#include <random>

#include "ict/proxy.hpp"
#include "ict/rng.hpp"
#include "oracles.hpp"

using namespace ict;

namespace {

struct Instance {
    ProxyParams params;
    Matrix xs;
    Vector ys;
    Vector weights;
};

Instance random_instance(std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_int_distribution<int> dim(1, 8), hid(2, 16), rows(1, 12);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> unit(0.0, 2.0);
    const int d = dim(rng), h = hid(rng), n = rows(rng);
    Instance in;
    in.params = init_proxy(d, h, seed);
    for (auto& l : in.params.layers)
        for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias(i) = 0.3 * normal(rng);
    in.xs = Matrix::NullaryExpr(n, d, [&] { return normal(rng); });
    in.ys = Vector::NullaryExpr(n, [&] { return normal(rng); });
    in.weights = Vector::NullaryExpr(n, [&] { return unit(rng); });
    return in;
}

Gradient random_direction(const ProxyParams& like, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> normal;
    Gradient g = Gradient::zeros_like(like);
    for (auto& l : g.layers) {
        l.weight = l.weight.unaryExpr([&](double) { return normal(rng); });
        l.bias = l.bias.unaryExpr([&](double) { return normal(rng); });
    }
    return g;
}

}  // namespace

TEST_CASE("init_proxy shapes and bounds") {
    const ProxyParams p = init_proxy(86, 2048, 7);
    CHECK(p.input_dim() == 86);
    CHECK(p.hidden() == 2048);
    CHECK(p.layers[1].weight.rows() == 2048);
    CHECK(p.layers[1].weight.cols() == 2048);
    CHECK(p.layers[2].weight.cols() == 1);
    CHECK(p.parameter_count() == 86 * 2048 + 2048 + 2048 * 2048 + 2048 + 2048 + 1);
    CHECK(p.layers[0].weight.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(86.0));
    CHECK(p.layers[1].weight.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(2048.0));
    for (const auto& l : p.layers) CHECK(l.bias.isZero(0.0));
}

TEST_CASE("init_proxy is a pure function of the seed") {
    CHECK(init_proxy(5, 16, 3) == init_proxy(5, 16, 3));
    CHECK_FALSE(init_proxy(5, 16, 3) == init_proxy(5, 16, 4));
}

TEST_CASE("init_proxy rejects non-positive sizes") {
    CHECK_THROWS_AS(init_proxy(0, 4, 1), std::invalid_argument);
    CHECK_THROWS_AS(init_proxy(3, 0, 1), std::invalid_argument);
}

TEST_CASE("forward of an all-zero network is its output bias") {
    ProxyParams p = init_proxy(4, 8, 1);
    for (auto& l : p.layers) l.weight.setZero();
    p.layers[2].bias(0) = 1.25;
    const Matrix xs = Matrix::Random(5, 4);
    CHECK(forward(p, xs).isApprox(Vector::Constant(5, 1.25)));
}

TEST_CASE("forward through a hand-set chain") {
    // 2 -> 3*2-1 = 5 -> -2*5+11 = 1 -> 4*1+0.5 = 4.5
    CHECK(forward_one(oracle::chain(3, -1, -2, 11, 4, 0.5), Vector::Constant(1, 2.0)) == 4.5);
    // second relu clips: -2*5+3 = -7 -> 0, output is the last bias
    CHECK(forward_one(oracle::chain(3, -1, -2, 3, 4, 0.5), Vector::Constant(1, 2.0)) == 0.5);
}

TEST_CASE("forward of a batch equals per-row evaluation") {
    const ProxyParams p = init_proxy(6, 12, 9);
    const Matrix xs = Matrix::Random(7, 6);
    const Vector batch = forward(p, xs);
    for (int i = 0; i < 7; ++i) CHECK(batch(i) == doctest::Approx(forward_one(p, xs.row(i).transpose())).epsilon(1e-14));
}

TEST_CASE("forward rejects a wrong input width") {
    const ProxyParams p = init_proxy(3, 4, 1);
    CHECK_THROWS_AS(forward(p, Matrix::Zero(2, 4)), std::invalid_argument);
}

TEST_CASE("parameter gradients match finite differences") {
    for (std::uint64_t s = 0; s < 25; ++s) {
        const Instance in = random_instance(1000 + s);
        const auto lg = weighted_mse_grad(in.params, in.xs, in.ys, in.weights);
        const Vector fd = oracle::fd_param_grad(in.params, in.xs, in.ys, in.weights);
        CHECK(oracle::relative_error(oracle::flatten(lg.grad), fd) < 1e-5);
        CHECK(lg.loss == doctest::Approx(oracle::weighted_loss(in.params, in.xs, in.ys, in.weights)).epsilon(1e-12));
    }
}

TEST_CASE("input gradients match finite differences") {
    for (std::uint64_t s = 0; s < 25; ++s) {
        const Instance in = random_instance(2000 + s);
        const Vector x = in.xs.row(0).transpose();
        CHECK(oracle::relative_error(input_grad(in.params, x), oracle::fd_input_grad(in.params, x)) < 1e-5);
    }
}

TEST_CASE("single-output chain gradient matches finite differences tightly") {
    const ProxyParams p = oracle::chain(0.7, 0.1, -1.3, 2.0, 0.9, -0.2);
    const Matrix xs = Matrix::Constant(1, 1, 0.4);
    const Vector ys = Vector::Constant(1, 0.3);
    const Vector w = Vector::Ones(1);
    const auto lg = weighted_mse_grad(p, xs, ys, w);
    CHECK(oracle::relative_error(oracle::flatten(lg.grad), oracle::fd_param_grad(p, xs, ys, w)) < 1e-6);
}

TEST_CASE("unit weights reproduce the unweighted loss") {
    const Instance in = random_instance(31);
    const auto a = weighted_mse_grad(in.params, in.xs, in.ys, Vector::Ones(in.ys.size()));
    const auto b = mse_grad(in.params, in.xs, in.ys);
    CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-14));
    CHECK(oracle::relative_error(oracle::flatten(a.grad), oracle::flatten(b.grad)) < 1e-14);
    CHECK(mse(in.params, in.xs, in.ys) == doctest::Approx(b.loss).epsilon(1e-14));
}

TEST_CASE("weighted loss is invariant to permuting the rows") {
    const Instance in = random_instance(57);
    const Eigen::Index n = in.xs.rows();
    Eigen::PermutationMatrix<Eigen::Dynamic> perm(n);
    perm.setIdentity();
    Rng rng(5);
    std::shuffle(perm.indices().data(), perm.indices().data() + n, rng);
    const auto a = weighted_mse_grad(in.params, in.xs, in.ys, in.weights);
    const auto b = weighted_mse_grad(in.params, perm * in.xs, perm * in.ys, perm * in.weights);
    CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-12));
    CHECK(oracle::relative_error(oracle::flatten(a.grad), oracle::flatten(b.grad)) < 1e-12);
}

TEST_CASE("zero weights give zero loss and gradient") {
    const Instance in = random_instance(8);
    const auto lg = weighted_mse_grad(in.params, in.xs, in.ys, Vector::Zero(in.ys.size()));
    CHECK(lg.loss == 0.0);
    CHECK(oracle::flatten(lg.grad).isZero(0.0));
}

TEST_CASE("weighted_mse_grad rejects mismatched lengths") {
    const Instance in = random_instance(8);
    CHECK_THROWS_AS(weighted_mse_grad(in.params, in.xs, in.ys, Vector::Ones(in.ys.size() + 1)),
                    std::invalid_argument);
}

TEST_CASE("input gradient of a linear-regime chain is the weight product") {
    const ProxyParams p = oracle::chain(3, -1, -2, 11, 4, 0.5);
    CHECK(input_grad(p, Vector::Constant(1, 2.0))(0) == -24.0);
}

TEST_CASE("parameter directional derivative matches finite differences") {
    for (std::uint64_t s = 0; s < 20; ++s) {
        const Instance in = random_instance(3000 + s);
        const Gradient dir = random_direction(in.params, s);
        const Vector jvp = param_directional_derivative(in.params, in.xs, dir);
        ProxyParams up = in.params, down = in.params;
        for (int l = 0; l < kNumLayers; ++l) {
            up.layers[l].weight += oracle::kStep * dir.layers[l].weight;
            up.layers[l].bias += oracle::kStep * dir.layers[l].bias;
            down.layers[l].weight -= oracle::kStep * dir.layers[l].weight;
            down.layers[l].bias -= oracle::kStep * dir.layers[l].bias;
        }
        const Vector fd = (forward(up, in.xs) - forward(down, in.xs)) / (2 * oracle::kStep);
        CHECK(oracle::relative_error(jvp, fd) < 1e-5);
    }
}

TEST_CASE("a zero learning rate leaves parameters unchanged") {
    const Instance in = random_instance(4);
    const auto lg = mse_grad(in.params, in.xs, in.ys);
    for (auto kind : {OptimizerKind::plain_sgd, OptimizerKind::adam}) {
        const auto r = apply_step(in.params, lg.grad, 0.0, make_optimizer_state(kind, in.params));
        CHECK(r.params == in.params);
    }
}

TEST_CASE("plain step subtracts lr times gradient") {
    const Instance in = random_instance(12);
    const auto lg = mse_grad(in.params, in.xs, in.ys);
    const auto r = apply_step(in.params, lg.grad, 0.1, make_optimizer_state(OptimizerKind::plain_sgd, in.params));
    CHECK(oracle::relative_error(oracle::flatten(r.params),
                                 oracle::flatten(in.params) - 0.1 * oracle::flatten(lg.grad)) < 1e-15);
}

TEST_CASE("adam follows the bias-corrected moment recurrence") {
    const ProxyParams p = oracle::chain(1, 1, 1, 1, 1, 1);
    Gradient g = Gradient::zeros_like(p);
    for (auto& l : g.layers) {
        l.weight.setConstant(0.5);
        l.bias.setConstant(0.5);
    }
    const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    double theta = 1.0, m = 0.0, v = 0.0;
    auto state = make_optimizer_state(OptimizerKind::adam, p);
    ProxyParams cur = p;
    for (int t = 1; t <= 2; ++t) {
        m = b1 * m + (1 - b1) * 0.5;
        v = b2 * v + (1 - b2) * 0.25;
        const double mhat = m / (1 - std::pow(b1, t));
        const double vhat = v / (1 - std::pow(b2, t));
        theta -= lr * mhat / (std::sqrt(vhat) + eps);
        auto r = apply_step(cur, g, lr, state);
        cur = r.params;
        state = r.state;
        CHECK(cur.layers[0].weight(0, 0) == doctest::Approx(theta).epsilon(1e-14));
        CHECK(cur.layers[2].bias(0) == doctest::Approx(theta).epsilon(1e-14));
    }
    CHECK(state.step == 2);
    // constant gradient: each step moves by lr * g / (|g| + eps), about lr
    CHECK(theta == doctest::Approx(1.0 - 0.2).epsilon(1e-7));
}

TEST_CASE("apply_step rejects a negative rate and non-finite gradients") {
    const ProxyParams p = init_proxy(2, 3, 1);
    Gradient g = Gradient::zeros_like(p);
    const auto st = make_optimizer_state(OptimizerKind::plain_sgd, p);
    CHECK_THROWS_AS(apply_step(p, g, -1.0, st), std::invalid_argument);
    g.layers[1].weight(0, 0) = std::nan("");
    CHECK_THROWS(apply_step(p, g, 0.1, st));
}

TEST_CASE("train_proxy fits a line") {
    OfflineDataset d;
    d.designs = Matrix(200, 1);
    d.scores = Vector(200);
    for (int i = 0; i < 200; ++i) {
        d.designs(i, 0) = -1.0 + 2.0 * i / 199.0;
        d.scores(i) = 2.0 * d.designs(i, 0);
    }
    TrainConfig cfg;
    cfg.hidden = 16;
    const ProxyParams p = train_proxy(d, cfg, 11);
    CHECK(mse(p, d.designs, d.scores) < 1e-2);
}

TEST_CASE("train_proxy with zero epochs returns the initialization") {
    OfflineDataset d;
    d.designs = Matrix::Random(10, 3);
    d.scores = Vector::Random(10);
    TrainConfig cfg;
    cfg.epochs = 0;
    cfg.hidden = 8;
    CHECK(train_proxy(d, cfg, 5) == init_proxy(3, 8, 5));
}

TEST_CASE("train_proxy is deterministic") {
    OfflineDataset d;
    d.designs = Matrix::Random(50, 3);
    d.scores = Vector::Random(50);
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.hidden = 8;
    cfg.batch_size = 16;
    CHECK(train_proxy(d, cfg, 5) == train_proxy(d, cfg, 5));
}
