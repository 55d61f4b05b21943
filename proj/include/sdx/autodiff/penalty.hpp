#pragma once

#include "sdx/nn/sequential.hpp"

namespace sdx {

// Per-sample ||d critic(x) / dx||_2 at the given points, as a graph node that
// stays differentiable with respect to the critic's parameters. Dropout is
// bypassed: the norm is taken of the deterministic critic function.
template <class T>
Var<T> input_gradient_norm(Sequential<T>& critic, const Tensor<T>& points) {
  if (auto bad = critic.unsupported_for_double_backward())
    throw UnsupportedLayerError("input_gradient_norm: " + *bad + " has no second-order backward");
  if (critic.output_shape() != Shape{1})
    throw DimensionError("input_gradient_norm: critic must output one score per sample, got " +
                         shape_str(critic.output_shape()));
  GradModeGuard recording(true);
  auto x = Var<T>::leaf(points);
  ForwardOptions opt;
  opt.mode = Mode::train;
  opt.penalty_path = true;
  auto scores = critic.forward(x, opt);
  // Samples are independent, so the gradient of the batch sum holds every
  // per-sample input gradient.
  auto g = grad(sum(scores), {x}, /*create_graph=*/true)[0];
  return l2_norm_per_sample(g);
}

}  // namespace sdx
