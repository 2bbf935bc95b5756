#pragma once

#include <array>
#include <cstdint>

#include <Eigen/Core>

#include "ict/dataset.hpp"

namespace ict {

/// One affine layer. `weight` is fan_in x fan_out so a batch of row-vector
/// inputs maps as `X * weight + bias^T`.
struct Layer {
    Matrix weight;
    Vector bias;
};

inline constexpr int kNumLayers = 3;

/// Fixed-depth stack of affine layers: relu, relu, identity. The tag keeps
/// parameters and gradients from being mixed up at call sites.
template <class Tag>
struct LayerStack {
    std::array<Layer, kNumLayers> layers;

    int input_dim() const { return static_cast<int>(layers[0].weight.rows()); }
    int hidden() const { return static_cast<int>(layers[0].weight.cols()); }
    std::int64_t parameter_count() const;
    bool all_finite() const;

    template <class OtherTag>
    bool same_shape(const LayerStack<OtherTag>& other) const;

    template <class OtherTag>
    static LayerStack zeros_like(const LayerStack<OtherTag>& other);

    template <class OtherTag>
    double dot(const LayerStack<OtherTag>& other) const;

    bool operator==(const LayerStack& other) const;
};

struct ParamsTag;
struct GradientTag;

using ProxyParams = LayerStack<ParamsTag>;
using Gradient = LayerStack<GradientTag>;

enum class OptimizerKind { plain_sgd, adam };

struct OptimizerState {
    OptimizerKind kind = OptimizerKind::plain_sgd;
    Gradient first_moment;   // adam only
    Gradient second_moment;  // adam only
    std::int64_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct LossAndGradient {
    double loss = 0.0;
    Gradient grad;
};

struct StepResult {
    ProxyParams params;
    OptimizerState state;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
ProxyParams init_proxy(int input_dim, int hidden, std::uint64_t seed);

/// Predictions for each row of `xs`.
Vector forward(const ProxyParams& params, const Matrix& xs);
double forward_one(const ProxyParams& params, const Vector& x);

/// loss = (1/n) sum_i w_i (f(x_i) - y_i)^2 and its exact parameter gradient.
LossAndGradient weighted_mse_grad(const ProxyParams& params, const Matrix& xs,
                                  const Vector& ys, const Vector& weights);

/// Unweighted mean squared error and gradient.
LossAndGradient mse_grad(const ProxyParams& params, const Matrix& xs, const Vector& ys);

double mse(const ProxyParams& params, const Matrix& xs, const Vector& ys);

/// d f(x) / d x. The relu derivative at exactly zero is taken as zero.
Vector input_grad(const ProxyParams& params, const Vector& x);

/// Directional derivative of every output with respect to the parameters:
/// row i is <direction, d f(x_i) / d theta>. Computed in forward mode.
Vector param_directional_derivative(const ProxyParams& params, const Matrix& xs,
                                    const Gradient& direction);

OptimizerState make_optimizer_state(OptimizerKind kind, const ProxyParams& like);

/// plain: theta - lr * grad. adam: bias-corrected moment update; advances the state.
StepResult apply_step(const ProxyParams& params, const Gradient& grad, double lr,
                      const OptimizerState& state);

struct TrainConfig {
    int hidden = 64;
    int epochs = 200;
    int batch_size = 128;
    double lr = 1e-3;
};

/// Minibatch adam on the unweighted mean squared error. Initialization and
/// shuffling both derive from `seed`.
ProxyParams train_proxy(const OfflineDataset& dataset, const TrainConfig& config,
                        std::uint64_t seed);

template <class Tag>
std::int64_t LayerStack<Tag>::parameter_count() const {
    std::int64_t n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
}

template <class Tag>
bool LayerStack<Tag>::all_finite() const {
    for (const auto& l : layers)
        if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
    return true;
}

template <class Tag>
template <class OtherTag>
bool LayerStack<Tag>::same_shape(const LayerStack<OtherTag>& other) const {
    for (int i = 0; i < kNumLayers; ++i) {
        const auto& a = layers[i];
        const auto& b = other.layers[i];
        if (a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols() ||
            a.bias.size() != b.bias.size())
            return false;
    }
    return true;
}

template <class Tag>
template <class OtherTag>
LayerStack<Tag> LayerStack<Tag>::zeros_like(const LayerStack<OtherTag>& other) {
    LayerStack out;
    for (int i = 0; i < kNumLayers; ++i) {
        out.layers[i].weight = Matrix::Zero(other.layers[i].weight.rows(), other.layers[i].weight.cols());
        out.layers[i].bias = Vector::Zero(other.layers[i].bias.size());
    }
    return out;
}

template <class Tag>
template <class OtherTag>
double LayerStack<Tag>::dot(const LayerStack<OtherTag>& other) const {
    double s = 0.0;
    for (int i = 0; i < kNumLayers; ++i) {
        s += layers[i].weight.cwiseProduct(other.layers[i].weight).sum();
        s += layers[i].bias.dot(other.layers[i].bias);
    }
    return s;
}

template <class Tag>
bool LayerStack<Tag>::operator==(const LayerStack& other) const {
    if (!same_shape(other)) return false;
    for (int i = 0; i < kNumLayers; ++i)
        if (layers[i].weight != other.layers[i].weight || layers[i].bias != other.layers[i].bias)
            return false;
    return true;
}

}  // namespace ict
