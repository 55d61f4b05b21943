#pragma once

#include <cmath>
#include <vector>

#include "sdx/autodiff/conv.hpp"
#include "sdx/core/rng.hpp"

namespace sdx {

enum class Mode { train, eval };

// Running statistics owned by a batch-norm layer.
template <class T>
struct BatchNormState {
  Tensor<T> running_mean;
  Tensor<T> running_var;
  T momentum = T(0.99);
  T epsilon = T(1e-5);
};

// Per-channel normalization over every dim except the last (channels).
template <class T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, BatchNormState<T>& state,
                  Mode mode) {
  const auto c = x.shape().back();
  const auto m = static_cast<std::int64_t>(x.size()) / c;
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c})
    throw DimensionError("batch_norm: gamma/beta must be [" + std::to_string(c) + "], input " +
                         shape_str(x.shape()));
  const auto& v = x.value();
  Tensor<T> mu(Shape{c}), var(Shape{c});
  if (mode == Mode::train) {
    if (x.shape()[0] < 2) throw DimensionError("batch_norm: batch size must be >= 2 in train mode");
    for (std::size_t i = 0; i < v.size(); ++i) mu[i % c] += v[i];
    for (std::int64_t ch = 0; ch < c; ++ch) mu[ch] /= static_cast<T>(m);
    for (std::size_t i = 0; i < v.size(); ++i) {
      const T d = v[i] - mu[i % c];
      var[i % c] += d * d;
    }
    for (std::int64_t ch = 0; ch < c; ++ch) var[ch] /= static_cast<T>(m);
    if (state.running_mean.empty()) {
      state.running_mean = Tensor<T>(Shape{c}, T(0));
      state.running_var = Tensor<T>(Shape{c}, T(1));
    }
    for (std::int64_t ch = 0; ch < c; ++ch) {
      state.running_mean[ch] = state.momentum * state.running_mean[ch] + (T(1) - state.momentum) * mu[ch];
      state.running_var[ch] = state.momentum * state.running_var[ch] + (T(1) - state.momentum) * var[ch];
    }
  } else {
    if (state.running_mean.empty()) {
      state.running_mean = Tensor<T>(Shape{c}, T(0));
      state.running_var = Tensor<T>(Shape{c}, T(1));
    }
    mu = state.running_mean;
    var = state.running_var;
  }
  Tensor<T> inv_std(Shape{c});
  for (std::int64_t ch = 0; ch < c; ++ch) inv_std[ch] = T(1) / std::sqrt(var[ch] + state.epsilon);
  Tensor<T> xhat(x.shape()), y(x.shape());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto ch = i % c;
    xhat[i] = (v[i] - mu[ch]) * inv_std[ch];
    y[i] = gamma.value()[ch] * xhat[i] + beta.value()[ch];
  }
  const bool batch_stats = mode == Mode::train;
  return make_op<T>(
      "batch_norm", std::move(y), {x, gamma, beta},
      [xhat, inv_std, c, m, batch_stats](const Node<T>& n, const Var<T>& gv, const std::vector<bool>& need) {
        const auto& g = gv.value();
        const auto& gam = n.inputs[1].value();
        Tensor<T> dgamma(Shape{c}), dbeta(Shape{c});
        for (std::size_t i = 0; i < g.size(); ++i) {
          dgamma[i % c] += g[i] * xhat[i];
          dbeta[i % c] += g[i];
        }
        Var<T> gx;
        if (need[0]) {
          Tensor<T> dx(g.shape());
          for (std::size_t i = 0; i < g.size(); ++i) {
            const auto ch = i % c;
            if (batch_stats) {
              const T dxhat = g[i] * gam[ch];
              const T sum_dxhat = dbeta[ch] * gam[ch];
              const T sum_dxhat_xhat = dgamma[ch] * gam[ch];
              dx[i] = inv_std[ch] / static_cast<T>(m) *
                      (static_cast<T>(m) * dxhat - sum_dxhat - xhat[i] * sum_dxhat_xhat);
            } else {
              dx[i] = g[i] * gam[ch] * inv_std[ch];
            }
          }
          gx = Var<T>::constant(std::move(dx));
        }
        return std::vector<Var<T>>{gx, need[1] ? Var<T>::constant(dgamma) : Var<T>(),
                                   need[2] ? Var<T>::constant(dbeta) : Var<T>()};
      },
      false);
}

// Inverted dropout: survivors are rescaled by 1 / (1 - rate). Eval mode and
// rate 0 are the identity.
template <class T>
Var<T> dropout(const Var<T>& x, double rate, Mode mode, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must be in [0, 1), got " + std::to_string(rate));
  if (mode == Mode::eval || rate == 0.0) return x;
  Tensor<T> mask(x.shape());
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = rng.uniform() < rate ? T(0) : keep_scale;
  return mul_const(x, mask);
}

// Mean softmax cross-entropy over the batch. logits: [N, C].
template <class T>
Var<T> softmax_cross_entropy(const Var<T>& logits, const std::vector<int>& labels) {
  if (logits.value().rank() != 2) throw DimensionError("softmax_cross_entropy expects [N, C] logits");
  const auto n = logits.shape()[0], c = logits.shape()[1];
  if (c < 2) throw DimensionError("softmax_cross_entropy needs at least 2 classes");
  if (static_cast<std::int64_t>(labels.size()) != n)
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                         std::to_string(n));
  Tensor<T> probs(logits.shape());
  T loss = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || labels[i] >= c)
      throw DimensionError("label " + std::to_string(labels[i]) + " out of range for " + std::to_string(c) +
                           " classes");
    const T* z = logits.value().data() + i * c;
    T mx = z[0];
    for (std::int64_t j = 1; j < c; ++j) mx = std::max(mx, z[j]);
    T s = 0;
    for (std::int64_t j = 0; j < c; ++j) s += std::exp(z[j] - mx);
    const T lse = mx + std::log(s);
    for (std::int64_t j = 0; j < c; ++j) probs[i * c + j] = std::exp(z[j] - lse);
    loss += lse - z[labels[i]];
  }
  loss /= static_cast<T>(n);
  return make_op<T>(
      "softmax_cross_entropy", Tensor<T>::scalar(loss), {logits},
      [probs, labels, n, c](const Node<T>&, const Var<T>& g, const std::vector<bool>&) {
        Tensor<T> gz = probs;
        const T f = g.value().item() / static_cast<T>(n);
        for (std::int64_t i = 0; i < n; ++i) {
          gz[i * c + labels[i]] -= T(1);
          for (std::int64_t j = 0; j < c; ++j) gz[i * c + j] *= f;
        }
        return std::vector<Var<T>>{Var<T>::constant(std::move(gz))};
      },
      false);
}

// Binary cross-entropy between sigmoid(logits) and targets in [0, 1], summed
// over every element of a sample and averaged over the batch.
template <class T>
Var<T> bce_with_logits(const Var<T>& logits, const Tensor<T>& targets) {
  logits.value().require_same_shape(targets, "bce_with_logits");
  const auto n = logits.shape()[0];
  T total = 0;
  const auto& z = logits.value();
  for (std::size_t i = 0; i < z.size(); ++i) {
    const T zi = z[i];
    total += std::max(zi, T(0)) - zi * targets[i] + std::log1p(std::exp(-std::abs(zi)));
  }
  total /= static_cast<T>(n);
  return make_op<T>(
      "bce_with_logits", Tensor<T>::scalar(total), {logits},
      [targets, n](const Node<T>& node, const Var<T>& g, const std::vector<bool>&) {
        const auto& z = node.inputs[0].value();
        Tensor<T> gz(z.shape());
        const T f = g.value().item() / static_cast<T>(n);
        for (std::size_t i = 0; i < z.size(); ++i) gz[i] = f * (sigmoid_scalar(z[i]) - targets[i]);
        return std::vector<Var<T>>{Var<T>::constant(std::move(gz))};
      },
      false);
}

// Mean squared error over every element.
template <class T>
Var<T> mse(const Var<T>& pred, const Tensor<T>& target) {
  return mean(square(sub(pred, Var<T>::constant(target))));
}

}  // namespace sdx
