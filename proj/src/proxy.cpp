#include "ict/proxy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "ict/rng.hpp"

namespace ict {

namespace {

struct Activations {
    Matrix pre1, post1;
    Matrix pre2, post2;
    Vector out;
};

void check_input(const ProxyParams& params, Eigen::Index cols) {
    if (cols != params.input_dim())
        throw std::invalid_argument("design has " + std::to_string(cols) +
                                    " components, proxy expects " +
                                    std::to_string(params.input_dim()));
}

Matrix relu(const Matrix& z) { return z.cwiseMax(0.0); }

// 1 where z > 0, else 0 (the subgradient at zero is zero).
Matrix relu_mask(const Matrix& z) { return (z.array() > 0.0).cast<double>().matrix(); }

Activations run_forward(const ProxyParams& p, const Matrix& xs) {
    check_input(p, xs.cols());
    const auto& [l1, l2, l3] = p.layers;
    Activations a;
    a.pre1.noalias() = xs * l1.weight;
    a.pre1.rowwise() += l1.bias.transpose();
    a.post1 = relu(a.pre1);
    a.pre2.noalias() = a.post1 * l2.weight;
    a.pre2.rowwise() += l2.bias.transpose();
    a.post2 = relu(a.pre2);
    a.out.noalias() = a.post2 * l3.weight.col(0);
    a.out.array() += l3.bias(0);
    return a;
}

// Backpropagates d(loss)/d(output) through a cached forward pass.
Gradient run_backward(const ProxyParams& p, const Matrix& xs, const Activations& a,
                      const Vector& out_delta) {
    const auto& [l1, l2, l3] = p.layers;
    Gradient g;
    g.layers[2].weight.noalias() = a.post2.transpose() * out_delta;
    g.layers[2].bias = Vector::Constant(1, out_delta.sum());

    Matrix delta2 = (out_delta * l3.weight.col(0).transpose()).cwiseProduct(relu_mask(a.pre2));
    g.layers[1].weight.noalias() = a.post1.transpose() * delta2;
    g.layers[1].bias = delta2.colwise().sum().transpose();

    Matrix delta1 = (delta2 * l2.weight.transpose()).cwiseProduct(relu_mask(a.pre1));
    g.layers[0].weight.noalias() = xs.transpose() * delta1;
    g.layers[0].bias = delta1.colwise().sum().transpose();
    return g;
}

}  // namespace

ProxyParams init_proxy(int input_dim, int hidden, std::uint64_t seed) {
    if (input_dim < 1) throw std::invalid_argument("init_proxy: input_dim must be >= 1");
    if (hidden < 1) throw std::invalid_argument("init_proxy: hidden must be >= 1");
    Rng rng(seed);
    const std::array<std::pair<int, int>, kNumLayers> shapes{
        {{input_dim, hidden}, {hidden, hidden}, {hidden, 1}}};
    ProxyParams p;
    for (int l = 0; l < kNumLayers; ++l) {
        const auto [fan_in, fan_out] = shapes[l];
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        p.layers[l].weight.resize(fan_in, fan_out);
        // Fill column-major so the draw order is fixed by shape alone.
        for (Eigen::Index j = 0; j < fan_out; ++j)
            for (Eigen::Index i = 0; i < fan_in; ++i) p.layers[l].weight(i, j) = dist(rng);
        p.layers[l].bias = Vector::Zero(fan_out);
    }
    return p;
}

Vector forward(const ProxyParams& params, const Matrix& xs) { return run_forward(params, xs).out; }

double forward_one(const ProxyParams& params, const Vector& x) {
    return forward(params, x.transpose())(0);
}

LossAndGradient weighted_mse_grad(const ProxyParams& params, const Matrix& xs, const Vector& ys,
                                  const Vector& weights) {
    const auto n = xs.rows();
    if (n < 1) throw std::invalid_argument("weighted_mse_grad: empty batch");
    if (ys.size() != n || weights.size() != n)
        throw std::invalid_argument("weighted_mse_grad: designs, targets and weights differ in length");
    if ((weights.array() < 0.0).any())
        throw std::invalid_argument("weighted_mse_grad: negative sample weight");

    const Activations a = run_forward(params, xs);
    const Vector residual = a.out - ys;
    const double inv_n = 1.0 / static_cast<double>(n);
    LossAndGradient result;
    result.loss = inv_n * weights.dot(residual.cwiseAbs2());
    const Vector out_delta = (2.0 * inv_n) * weights.cwiseProduct(residual);
    result.grad = run_backward(params, xs, a, out_delta);
    return result;
}

LossAndGradient mse_grad(const ProxyParams& params, const Matrix& xs, const Vector& ys) {
    return weighted_mse_grad(params, xs, ys, Vector::Ones(xs.rows()));
}

double mse(const ProxyParams& params, const Matrix& xs, const Vector& ys) {
    if (xs.rows() < 1) throw std::invalid_argument("mse: empty batch");
    if (ys.size() != xs.rows()) throw std::invalid_argument("mse: designs and targets differ in length");
    return (forward(params, xs) - ys).squaredNorm() / static_cast<double>(xs.rows());
}

Vector input_grad(const ProxyParams& params, const Vector& x) {
    const Matrix xs = x.transpose();
    const Activations a = run_forward(params, xs);
    const auto& [l1, l2, l3] = params.layers;
    Matrix delta2 = l3.weight.col(0).transpose().cwiseProduct(relu_mask(a.pre2));
    Matrix delta1 = (delta2 * l2.weight.transpose()).cwiseProduct(relu_mask(a.pre1));
    return (delta1 * l1.weight.transpose()).transpose();
}

Vector param_directional_derivative(const ProxyParams& params, const Matrix& xs,
                                    const Gradient& direction) {
    if (!params.same_shape(direction))
        throw std::invalid_argument("param_directional_derivative: direction shape mismatch");
    const Activations a = run_forward(params, xs);
    const auto& [l1, l2, l3] = params.layers;
    const auto& [d1, d2, d3] = direction.layers;

    Matrix dpre1 = xs * d1.weight;
    dpre1.rowwise() += d1.bias.transpose();
    const Matrix dpost1 = dpre1.cwiseProduct(relu_mask(a.pre1));

    Matrix dpre2 = dpost1 * l2.weight + a.post1 * d2.weight;
    dpre2.rowwise() += d2.bias.transpose();
    const Matrix dpost2 = dpre2.cwiseProduct(relu_mask(a.pre2));

    Vector dout = dpost2 * l3.weight.col(0) + a.post2 * d3.weight.col(0);
    dout.array() += d3.bias(0);
    return dout;
}

OptimizerState make_optimizer_state(OptimizerKind kind, const ProxyParams& like) {
    OptimizerState s;
    s.kind = kind;
    if (kind == OptimizerKind::adam) {
        s.first_moment = Gradient::zeros_like(like);
        s.second_moment = Gradient::zeros_like(like);
    }
    return s;
}

StepResult apply_step(const ProxyParams& params, const Gradient& grad, double lr,
                      const OptimizerState& state) {
    if (!(lr >= 0.0) || !std::isfinite(lr))
        throw std::invalid_argument("apply_step: learning rate must be finite and non-negative");
    if (!params.same_shape(grad)) throw std::invalid_argument("apply_step: gradient shape mismatch");
    if (!grad.all_finite()) throw std::invalid_argument("apply_step: non-finite gradient entry");

    StepResult r{params, state};
    r.state.step = state.step + 1;
    if (state.kind == OptimizerKind::plain_sgd) {
        for (int l = 0; l < kNumLayers; ++l) {
            r.params.layers[l].weight -= lr * grad.layers[l].weight;
            r.params.layers[l].bias -= lr * grad.layers[l].bias;
        }
    } else {
        if (!params.same_shape(state.first_moment) || !params.same_shape(state.second_moment))
            throw std::invalid_argument("apply_step: optimizer state shape mismatch");
        const double b1 = state.beta1;
        const double b2 = state.beta2;
        const double t = static_cast<double>(r.state.step);
        const double c1 = 1.0 - std::pow(b1, t);
        const double c2 = 1.0 - std::pow(b2, t);
        auto update = [&](auto& theta, auto& m, auto& v, const auto& g) {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g.cwiseAbs2();
            theta.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + state.epsilon);
        };
        for (int l = 0; l < kNumLayers; ++l) {
            update(r.params.layers[l].weight, r.state.first_moment.layers[l].weight,
                   r.state.second_moment.layers[l].weight, grad.layers[l].weight);
            update(r.params.layers[l].bias, r.state.first_moment.layers[l].bias,
                   r.state.second_moment.layers[l].bias, grad.layers[l].bias);
        }
    }
    if (!r.params.all_finite()) throw std::runtime_error("apply_step: update produced non-finite parameters");
    return r;
}

ProxyParams train_proxy(const OfflineDataset& dataset, const TrainConfig& config, std::uint64_t seed) {
    if (dataset.size() < 1) throw std::invalid_argument("train_proxy: empty dataset");
    if (config.epochs < 0) throw std::invalid_argument("train_proxy: negative epoch count");
    if (config.batch_size < 1) throw std::invalid_argument("train_proxy: batch size must be >= 1");

    ProxyParams params = init_proxy(dataset.dim(), config.hidden, seed);
    OptimizerState state = make_optimizer_state(OptimizerKind::adam, params);
    Rng shuffle_rng(derive_seed(seed, {role::minibatch}));

    const int n = dataset.size();
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Matrix xs;
    Vector ys;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        for (int start = 0; start < n; start += config.batch_size) {
            const int len = std::min(config.batch_size, n - start);
            xs.resize(len, dataset.dim());
            ys.resize(len);
            for (int i = 0; i < len; ++i) {
                xs.row(i) = dataset.designs.row(order[static_cast<std::size_t>(start + i)]);
                ys(i) = dataset.scores(order[static_cast<std::size_t>(start + i)]);
            }
            const LossAndGradient lg = mse_grad(params, xs, ys);
            StepResult next = apply_step(params, lg.grad, config.lr, state);
            params = std::move(next.params);
            state = std::move(next.state);
        }
    }
    return params;
}

}  // namespace ict
