#pragma once

#include <algorithm>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sdx/autodiff/tensor.hpp"

namespace sdx {

namespace detail {
inline thread_local bool grad_enabled = true;
}

inline bool grad_enabled() { return detail::grad_enabled; }

// RAII switch for operation recording (off for inference and plain backward).
class GradModeGuard {
 public:
  explicit GradModeGuard(bool enabled) : previous_(detail::grad_enabled) {
    detail::grad_enabled = enabled;
  }
  ~GradModeGuard() { detail::grad_enabled = previous_; }
  GradModeGuard(const GradModeGuard&) = delete;
  GradModeGuard& operator=(const GradModeGuard&) = delete;

 private:
  bool previous_;
};

struct NoGrad : GradModeGuard {
  NoGrad() : GradModeGuard(false) {}
};

template <class T>
class Var;

template <class T>
struct Node;

// Given the node and the gradient of its output, return one gradient per
// input (an empty Var where `needed[i]` is false).
template <class T>
using BackwardFn =
    std::function<std::vector<Var<T>>(const Node<T>&, const Var<T>&, const std::vector<bool>& needed)>;

template <class T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // accumulated by backward() on leaves only
  bool requires_grad = false;
  bool leaf = true;
  // True when the backward rule is written in recorded ops, so it can itself
  // be differentiated (needed for the gradient penalty).
  bool higher_order = true;
  std::string op = "leaf";
  std::vector<Var<T>> inputs;
  BackwardFn<T> backward;
};

// Handle to a graph node. Copies share the node.
template <class T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}

  static Var constant(Tensor<T> v) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(v);
    return Var(std::move(n));
  }

  static Var leaf(Tensor<T> v, bool requires_grad = true) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(v);
    n->requires_grad = requires_grad;
    return Var(std::move(n));
  }

  explicit operator bool() const { return static_cast<bool>(node_); }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& shared() const { return node_; }

  Tensor<T>& grad() { return node_->grad; }
  const Tensor<T>& grad() const { return node_->grad; }

  // Same value, cut from the graph.
  Var detach() const { return constant(node_->value); }

 private:
  std::shared_ptr<Node<T>> node_;
};

template <class T>
Var<T> make_op(std::string name, Tensor<T> value, std::vector<Var<T>> inputs, BackwardFn<T> fn,
               bool higher_order = true) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (grad_enabled() && any) {
    n->requires_grad = true;
    n->leaf = false;
    n->higher_order = higher_order;
    n->op = std::move(name);
    n->inputs = std::move(inputs);
    n->backward = std::move(fn);
  }
  return Var<T>(std::move(n));
}

namespace detail {

// Nodes reachable from `root` through requires_grad edges, inputs before
// outputs. Iterative DFS so deep graphs do not exhaust the stack.
template <class T>
std::vector<Node<T>*> topo_order(Node<T>* root) {
  std::vector<Node<T>*> order;
  std::unordered_map<Node<T>*, int> state;  // 1 = on stack, 2 = done
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root, 0}};
  state[root] = 1;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].node();
      if (child && child->requires_grad && !state.count(child)) {
        state[child] = 1;
        stack.emplace_back(child, 0);
      }
    } else {
      state[node] = 2;
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

template <class T>
Var<T> ones_like_var(const Tensor<T>& v) {
  return Var<T>::constant(Tensor<T>(v.shape(), T(1)));
}

template <class T>
Var<T> add_grads(const Var<T>& a, const Var<T>& b);

template <class T>
bool relevant_target(const std::vector<Node<T>*>& targets, Node<T>* n) {
  return std::find(targets.begin(), targets.end(), n) != targets.end();
}

// Shared reverse sweep. `targets` restricts propagation to paths that reach
// those nodes (empty = every leaf). Returns the accumulated gradient per node.
template <class T>
std::unordered_map<Node<T>*, Var<T>> reverse_sweep(const Var<T>& output,
                                                   const std::vector<Node<T>*>& targets,
                                                   bool create_graph) {
  if (output.size() != 1)
    throw DimensionError("backward requires a scalar output, got shape " + shape_str(output.shape()));
  std::unordered_map<Node<T>*, Var<T>> grads;
  if (!output.requires_grad()) return grads;

  const auto order = topo_order(output.node());
  std::unordered_map<Node<T>*, bool> relevant;
  for (Node<T>* n : order) {
    bool r;
    if (targets.empty()) {
      r = n->leaf;
    } else {
      r = std::find(targets.begin(), targets.end(), n) != targets.end();
    }
    for (const auto& in : n->inputs)
      if (in.requires_grad() && relevant[in.node()]) r = true;
    relevant[n] = r;
  }

  grads[output.node()] = ones_like_var(output.value());
  GradModeGuard mode(create_graph);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    auto found = grads.find(n);
    if (found == grads.end() || n->leaf) continue;
    if (!relevant[n]) continue;
    if (create_graph && !n->higher_order)
      throw UnsupportedLayerError("operation '" + n->op +
                                  "' does not support second-order gradients");
    std::vector<bool> needed(n->inputs.size());
    bool any = false;
    for (std::size_t i = 0; i < n->inputs.size(); ++i) {
      needed[i] = n->inputs[i].requires_grad() && relevant[n->inputs[i].node()];
      any = any || needed[i];
    }
    if (!any) continue;
    Var<T> gout = found->second;
    auto gin = n->backward(*n, gout, needed);
    for (std::size_t i = 0; i < n->inputs.size(); ++i) {
      if (!needed[i] || !gin[i]) continue;
      Node<T>* in = n->inputs[i].node();
      auto g = grads.find(in);
      if (g == grads.end())
        grads.emplace(in, gin[i]);
      else
        g->second = add_grads(g->second, gin[i]);
    }
    // Interior gradients are no longer needed once propagated.
    if (!create_graph && !(targets.empty() ? false : relevant_target(targets, n))) grads.erase(n);
  }
  return grads;
}

}  // namespace detail

// Accumulate d(loss)/d(leaf) into every reachable leaf's grad buffer (or only
// into `only`, when given). Grads add up across calls until zeroed.
template <class T>
void backward(const Var<T>& loss, const std::vector<Var<T>>& only = {}) {
  std::vector<Node<T>*> targets;
  for (const auto& v : only) targets.push_back(v.node());
  auto grads = detail::reverse_sweep(loss, targets, false);
  for (auto& [node, g] : grads) {
    if (!node->leaf) continue;
    if (!targets.empty() && std::find(targets.begin(), targets.end(), node) == targets.end()) continue;
    if (node->grad.empty() || node->grad.shape() != node->value.shape())
      node->grad = Tensor<T>(node->value.shape());
    node->grad += g.value();
  }
}

// Gradients of a scalar output with respect to `wrt`. With create_graph the
// results are themselves differentiable graph nodes.
template <class T>
std::vector<Var<T>> grad(const Var<T>& output, const std::vector<Var<T>>& wrt, bool create_graph = false) {
  std::vector<Node<T>*> targets;
  for (const auto& v : wrt) targets.push_back(v.node());
  auto grads = detail::reverse_sweep(output, targets, create_graph);
  std::vector<Var<T>> out;
  for (const auto& v : wrt) {
    auto it = grads.find(v.node());
    out.push_back(it != grads.end() ? it->second : Var<T>::constant(Tensor<T>(v.shape())));
  }
  return out;
}

}  // namespace sdx
