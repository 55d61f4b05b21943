#pragma once

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "sdx/autodiff/var.hpp"
#include "sdx/core/error.hpp"

namespace sdx {

// Trainable tensor: value and grad live on a leaf graph node; the Adam moment
// buffers are allocated on the first optimizer step.
template <class T>
class Parameter {
 public:
  Parameter() = default;
  Parameter(std::string name, Tensor<T> value) : name_(std::move(name)), var_(Var<T>::leaf(std::move(value))) {
    var_.grad() = Tensor<T>(var_.shape());
  }

  Parameter(const Parameter& o)
      : name_(o.name_), var_(Var<T>::leaf(o.value())), adam_m_(o.adam_m_), adam_v_(o.adam_v_), step_(o.step_) {
    var_.grad() = o.var_.grad();
  }
  Parameter& operator=(const Parameter& o) {
    if (this != &o) *this = Parameter(o);
    return *this;
  }
  Parameter(Parameter&&) noexcept = default;
  Parameter& operator=(Parameter&&) noexcept = default;

  const std::string& name() const { return name_; }
  const Var<T>& var() const { return var_; }
  const Shape& shape() const { return var_.shape(); }

  Tensor<T>& value() { return var_.mutable_value(); }
  const Tensor<T>& value() const { return var_.value(); }
  Tensor<T>& grad() { return var_.grad(); }
  const Tensor<T>& grad() const { return var_.grad(); }

  Tensor<T>& adam_m() { return ensure(adam_m_); }
  Tensor<T>& adam_v() { return ensure(adam_v_); }
  const Tensor<T>& adam_m_or_empty() const { return adam_m_; }
  const Tensor<T>& adam_v_or_empty() const { return adam_v_; }
  long step_count() const { return step_; }
  void set_step_count(long s) { step_ = s; }

  void zero_grad() { var_.grad().fill(T(0)); }

 private:
  Tensor<T>& ensure(Tensor<T>& t) {
    if (t.empty()) t = Tensor<T>(shape());
    return t;
  }

  std::string name_;
  Var<T> var_;
  Tensor<T> adam_m_;
  Tensor<T> adam_v_;
  long step_ = 0;
};

struct AdamConfig {
  double learning_rate = 8e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const {
    if (!(learning_rate >= 0.0)) throw ConfigError("Adam learning_rate must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
      throw ConfigError("Adam betas must lie in [0, 1)");
    if (!(epsilon > 0.0)) throw ConfigError("Adam epsilon must be > 0");
  }
};

// Bias-corrected Adam update on each parameter, then zero its grad. The whole
// step is abandoned (nothing modified) if any grad holds NaN/Inf.
template <class T>
void adam_step(const std::vector<Parameter<T>*>& params, const AdamConfig& cfg) {
  cfg.validate();
  for (const auto* p : params) {
    if (!p->grad().all_finite()) {
      std::ostringstream os;
      os << "non-finite gradient in parameter '" << p->name() << "' " << shape_str(p->shape())
         << "; Adam step aborted";
      throw NumericalError(os.str());
    }
  }
  for (auto* p : params) {
    const long t = p->step_count() + 1;
    auto& m = p->adam_m();
    auto& v = p->adam_v();
    auto& w = p->value();
    const auto& g = p->grad();
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      const double mhat = static_cast<double>(m[i]) / c1;
      const double vhat = static_cast<double>(v[i]) / c2;
      w[i] -= static_cast<T>(cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon));
    }
    p->set_step_count(t);
    p->zero_grad();
  }
}

template <class T>
void zero_grads(const std::vector<Parameter<T>*>& params) {
  for (auto* p : params) p->zero_grad();
}

}  // namespace sdx
