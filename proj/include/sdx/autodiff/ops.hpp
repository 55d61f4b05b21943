#pragma once

#include <Eigen/Core>
#include <cmath>
#include <limits>

#include "sdx/autodiff/var.hpp"

namespace sdx {

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

namespace detail {

template <class T, class F>
Tensor<T> map_tensor(const Tensor<T>& a, F f) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

template <class T, class F>
Tensor<T> zip_tensor(const Tensor<T>& a, const Tensor<T>& b, F f, const char* op) {
  a.require_same_shape(b, op);
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
  return out;
}

inline std::vector<bool> none_needed(std::size_t n) { return std::vector<bool>(n, false); }

}  // namespace detail

// ---------------------------------------------------------------- elementwise

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  auto v = detail::zip_tensor(a.value(), b.value(), [](T x, T y) { return x + y; }, "add");
  return make_op<T>("add", std::move(v), {a, b},
                    [](const Node<T>&, const Var<T>& g, const std::vector<bool>&) {
                      return std::vector<Var<T>>{g, g};
                    });
}

template <class T>
Var<T> scale(const Var<T>& a, T c) {
  auto v = detail::map_tensor(a.value(), [c](T x) { return c * x; });
  return make_op<T>("scale", std::move(v), {a},
                    [c](const Node<T>&, const Var<T>& g, const std::vector<bool>&) {
                      return std::vector<Var<T>>{scale(g, c)};
                    });
}

template <class T>
Var<T> neg(const Var<T>& a) {
  return scale(a, T(-1));
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  auto v = detail::zip_tensor(a.value(), b.value(), [](T x, T y) { return x - y; }, "sub");
  return make_op<T>("sub", std::move(v), {a, b},
                    [](const Node<T>&, const Var<T>& g, const std::vector<bool>& need) {
                      return std::vector<Var<T>>{g, need[1] ? neg(g) : Var<T>()};
                    });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  auto v = detail::zip_tensor(a.value(), b.value(), [](T x, T y) { return x * y; }, "mul");
  return make_op<T>("mul", std::move(v), {a, b},
                    [](const Node<T>& n, const Var<T>& g, const std::vector<bool>& need) {
                      return std::vector<Var<T>>{need[0] ? mul(g, n.inputs[1]) : Var<T>(),
                                                 need[1] ? mul(g, n.inputs[0]) : Var<T>()};
                    });
}

// Multiply by a constant tensor (masks, fixed noise).
template <class T>
Var<T> mul_const(const Var<T>& a, const Tensor<T>& m) {
  auto v = detail::zip_tensor(a.value(), m, [](T x, T y) { return x * y; }, "mul_const");
  return make_op<T>("mul_const", std::move(v), {a},
                    [m](const Node<T>&, const Var<T>& g, const std::vector<bool>&) {
                      return std::vector<Var<T>>{mul_const(g, m)};
                    });
}

template <class T>
Var<T> add_scalar(const Var<T>& a, T c) {
  auto v = detail::map_tensor(a.value(), [c](T x) { return x + c; });
  return make_op<T>("add_scalar", std::move(v), {a},
                    [](const Node<T>&, const Var<T>& g, const std::vector<bool>&) {
                      return std::vector<Var<T>>{g};
                    });
}

template <class T>
Var<T> square(const Var<T>& a) {
  return mul(a, a);
}

template <class T>
Var<T> exp(const Var<T>& a) {
  auto v = detail::map_tensor(a.value(), [](T x) { return std::exp(x); });
  return make_op<T>(
      "exp", v, {a},
      [v](const Node<T>&, const Var<T>& g, const std::vector<bool>&) {
        return std::vector<Var<T>>{Var<T>::constant(
            detail::zip_tensor(g.value(), v, [](T x, T y) { return x * y; }, "exp'"))};
      },
      false);
}

// ---------------------------------------------------------------- shape

template <class T>
Var<T> reshape(const Var<T>& a, Shape s) {
  auto v = a.value().reshaped(std::move(s));
  return make_op<T>("reshape", std::move(v), {a},
                    [](const Node<T>& n, const Var<T>& g, const std::vector<bool>&) {
                      return std::vector<Var<T>>{reshape(g, n.inputs[0].shape())};
                    });
}

// [N, ...] -> [N, prod(...)]
template <class T>
Var<T> flatten(const Var<T>& a) {
  const auto n = a.shape()[0];
  return reshape(a, Shape{n, static_cast<std::int64_t>(a.size()) / n});
}

// ---------------------------------------------------------------- reductions

template <class T>
Var<T> expand_scalar(const Var<T>& s, const Shape& shape);

template <class T>
Var<T> sum(const Var<T>& a) {
  T acc = 0;
  for (T x : a.value().values()) acc += x;
  return make_op<T>("sum", Tensor<T>::scalar(acc), {a},
                    [](const Node<T>& n, const Var<T>& g, const std::vector<bool>&) {
                      return std::vector<Var<T>>{expand_scalar(g, n.inputs[0].shape())};
                    });
}

template <class T>
Var<T> expand_scalar(const Var<T>& s, const Shape& shape) {
  return make_op<T>("expand_scalar", Tensor<T>(shape, s.value().item()), {s},
                    [](const Node<T>&, const Var<T>& g, const std::vector<bool>&) {
                      return std::vector<Var<T>>{sum(g)};
                    });
}

template <class T>
Var<T> mean(const Var<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(a.size()));
}

template <class T>
Var<T> broadcast_channels(const Var<T>& b, const Shape& shape);

// Sum over all but the last dimension: [..., C] -> [C].
template <class T>
Var<T> reduce_to_channels(const Var<T>& a) {
  const auto c = a.shape().back();
  Tensor<T> out(Shape{c});
  const auto& v = a.value();
  for (std::size_t i = 0; i < v.size(); ++i) out[i % c] += v[i];
  return make_op<T>("reduce_to_channels", std::move(out), {a},
                    [](const Node<T>& n, const Var<T>& g, const std::vector<bool>&) {
                      return std::vector<Var<T>>{broadcast_channels(g, n.inputs[0].shape())};
                    });
}

template <class T>
Var<T> broadcast_channels(const Var<T>& b, const Shape& shape) {
  const auto c = shape.back();
  if (b.shape() != Shape{c})
    throw DimensionError("broadcast_channels: " + shape_str(b.shape()) + " onto " + shape_str(shape));
  Tensor<T> out(shape);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = b.value()[i % c];
  return make_op<T>("broadcast_channels", std::move(out), {b},
                    [](const Node<T>&, const Var<T>& g, const std::vector<bool>&) {
                      return std::vector<Var<T>>{reduce_to_channels(g)};
                    });
}

// x[..., C] + b[C]
template <class T>
Var<T> add_bias(const Var<T>& x, const Var<T>& b) {
  const auto c = x.shape().back();
  if (b.shape() != Shape{c})
    throw DimensionError("add_bias: bias " + shape_str(b.shape()) + " vs input " + shape_str(x.shape()));
  Tensor<T> out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i % c];
  return make_op<T>("add_bias", std::move(out), {x, b},
                    [](const Node<T>&, const Var<T>& g, const std::vector<bool>& need) {
                      return std::vector<Var<T>>{g, need[1] ? reduce_to_channels(g) : Var<T>()};
                    });
}

// Per-sample Euclidean norm over all non-leading dims: [N, ...] -> [N].
// First-order only; the derivative at a zero vector is taken as zero.
template <class T>
Var<T> l2_norm_per_sample(const Var<T>& a) {
  const auto n = a.shape()[0];
  const auto inner = static_cast<std::int64_t>(a.size()) / n;
  Tensor<T> out(Shape{n});
  for (std::int64_t s = 0; s < n; ++s) {
    T acc = 0;
    for (std::int64_t j = 0; j < inner; ++j) acc += a.value()[s * inner + j] * a.value()[s * inner + j];
    out[s] = std::sqrt(acc);
  }
  return make_op<T>(
      "l2_norm_per_sample", out, {a},
      [out, n, inner](const Node<T>& node, const Var<T>& g, const std::vector<bool>&) {
        const auto& x = node.inputs[0].value();
        Tensor<T> gx(x.shape());
        for (std::int64_t s = 0; s < n; ++s) {
          if (out[s] == T(0)) continue;
          const T f = g.value()[s] / out[s];
          for (std::int64_t j = 0; j < inner; ++j) gx[s * inner + j] = f * x[s * inner + j];
        }
        return std::vector<Var<T>>{Var<T>::constant(std::move(gx))};
      },
      false);
}

// ---------------------------------------------------------------- matmul

// op(a) * op(b) for 2-D operands; op = transpose when the flag is set.
template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b, bool ta = false, bool tb = false) {
  if (a.value().rank() != 2 || b.value().rank() != 2)
    throw DimensionError("matmul expects 2-D operands, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  const auto ar = a.shape()[0], ac = a.shape()[1], br = b.shape()[0], bc = b.shape()[1];
  const auto m = ta ? ac : ar, k = ta ? ar : ac;
  const auto k2 = tb ? bc : br, n = tb ? br : bc;
  if (k != k2)
    throw DimensionError("matmul inner dimension mismatch: " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  Tensor<T> out(Shape{m, n});
  ConstMatMap<T> A(a.value().data(), ar, ac), B(b.value().data(), br, bc);
  MatMap<T> C(out.data(), m, n);
  if (!ta && !tb)
    C.noalias() = A * B;
  else if (ta && !tb)
    C.noalias() = A.transpose() * B;
  else if (!ta && tb)
    C.noalias() = A * B.transpose();
  else
    C.noalias() = A.transpose() * B.transpose();
  return make_op<T>("matmul", std::move(out), {a, b},
                    [ta, tb](const Node<T>& node, const Var<T>& g, const std::vector<bool>& need) {
                      const auto& A = node.inputs[0];
                      const auto& B = node.inputs[1];
                      Var<T> ga, gb;
                      if (!ta && !tb) {
                        if (need[0]) ga = matmul(g, B, false, true);
                        if (need[1]) gb = matmul(A, g, true, false);
                      } else if (ta && !tb) {
                        if (need[0]) ga = matmul(B, g, false, true);
                        if (need[1]) gb = matmul(A, g, false, false);
                      } else if (!ta && tb) {
                        if (need[0]) ga = matmul(g, B, false, false);
                        if (need[1]) gb = matmul(g, A, true, false);
                      } else {
                        if (need[0]) ga = matmul(B, g, true, true);
                        if (need[1]) gb = matmul(g, A, true, true);
                      }
                      return std::vector<Var<T>>{ga, gb};
                    });
}

// ---------------------------------------------------------------- activations

enum class ActivationKind { linear, relu, leaky_relu, tanh, sigmoid };

inline const char* activation_name(ActivationKind k) {
  switch (k) {
    case ActivationKind::linear: return "linear";
    case ActivationKind::relu: return "relu";
    case ActivationKind::leaky_relu: return "leaky_relu";
    case ActivationKind::tanh: return "tanh";
    case ActivationKind::sigmoid: return "sigmoid";
  }
  return "?";
}

inline ActivationKind parse_activation(const std::string& s) {
  if (s == "linear") return ActivationKind::linear;
  if (s == "relu") return ActivationKind::relu;
  if (s == "leaky_relu") return ActivationKind::leaky_relu;
  if (s == "tanh") return ActivationKind::tanh;
  if (s == "sigmoid") return ActivationKind::sigmoid;
  throw ConfigError("unknown activation '" + s + "'");
}

// Piecewise-linear with slope `alpha` below zero; relu is alpha = 0. The mask
// is constant, so the backward is itself differentiable (second derivative is
// zero almost everywhere).
template <class T>
Var<T> leaky_relu(const Var<T>& x, T alpha) {
  Tensor<T> mask(x.shape());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = x.value()[i] > T(0) ? T(1) : alpha;
  return mul_const(x, mask);
}

template <class T>
Var<T> relu(const Var<T>& x) {
  return leaky_relu(x, T(0));
}

template <class T>
Var<T> tanh(const Var<T>& x) {
  auto y = detail::map_tensor(x.value(), [](T v) { return std::tanh(v); });
  return make_op<T>(
      "tanh", y, {x},
      [y](const Node<T>&, const Var<T>& g, const std::vector<bool>&) {
        return std::vector<Var<T>>{Var<T>::constant(detail::zip_tensor(
            g.value(), y, [](T gv, T yv) { return gv * (T(1) - yv * yv); }, "tanh'"))};
      },
      false);
}

template <class T>
T sigmoid_scalar(T v) {
  if (v >= 0) return T(1) / (T(1) + std::exp(-v));
  const T e = std::exp(v);
  return e / (T(1) + e);
}

template <class T>
Var<T> sigmoid(const Var<T>& x) {
  auto y = detail::map_tensor(x.value(), [](T v) { return sigmoid_scalar(v); });
  return make_op<T>(
      "sigmoid", y, {x},
      [y](const Node<T>&, const Var<T>& g, const std::vector<bool>&) {
        return std::vector<Var<T>>{Var<T>::constant(detail::zip_tensor(
            g.value(), y, [](T gv, T yv) { return gv * yv * (T(1) - yv); }, "sigmoid'"))};
      },
      false);
}

template <class T>
Var<T> activate(const Var<T>& x, ActivationKind kind, T alpha = T(0.2)) {
  switch (kind) {
    case ActivationKind::linear: return x;
    case ActivationKind::relu: return relu(x);
    case ActivationKind::leaky_relu: return leaky_relu(x, alpha);
    case ActivationKind::tanh: return tanh(x);
    case ActivationKind::sigmoid: return sigmoid(x);
  }
  return x;
}

namespace detail {
template <class T>
Var<T> add_grads(const Var<T>& a, const Var<T>& b) {
  if (sdx::grad_enabled()) return add(a, b);
  Tensor<T> v = a.value();
  v += b.value();
  return Var<T>::constant(std::move(v));
}
}  // namespace detail

}  // namespace sdx
