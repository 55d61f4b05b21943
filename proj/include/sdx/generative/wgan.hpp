#pragma once

#include <string>
#include <vector>

#include "sdx/autodiff.hpp"

namespace sdx::generative {

enum class UpsampleMode { transpose, nearest };

struct WganArch {
  std::int64_t noise_dim = 128;
  Shape seed_shape = {16, 1, 512};  // dense output reshaped to this
  std::vector<std::int64_t> generator_filters = {256, 128, 64, 32};
  std::int64_t generator_kernel = 3;
  UpsampleMode upsample = UpsampleMode::transpose;
  bool batch_norm = true;
  double output_dropout = 0.0;

  std::int64_t input_height = 512;
  std::int64_t input_width = 32;
  std::vector<std::int64_t> critic_filters = {32, 64, 128, 256, 512};
  std::int64_t critic_kernel = 5;
  double critic_dropout = 0.3;
  double leaky_alpha = 0.2;

  nlohmann::json to_json() const {
    return {{"noise_dim", noise_dim},
            {"seed_shape", seed_shape},
            {"generator_filters", generator_filters},
            {"generator_kernel", generator_kernel},
            {"upsample", upsample == UpsampleMode::transpose ? "transpose" : "nearest"},
            {"batch_norm", batch_norm},
            {"output_dropout", output_dropout},
            {"input_height", input_height},
            {"input_width", input_width},
            {"critic_filters", critic_filters},
            {"critic_kernel", critic_kernel},
            {"critic_dropout", critic_dropout},
            {"leaky_alpha", leaky_alpha}};
  }

  static WganArch from_json(const nlohmann::json& j) {
    WganArch a;
    a.noise_dim = j.value("noise_dim", a.noise_dim);
    a.seed_shape = j.value("seed_shape", a.seed_shape);
    a.generator_filters = j.value("generator_filters", a.generator_filters);
    a.generator_kernel = j.value("generator_kernel", a.generator_kernel);
    const auto up = j.value("upsample", std::string("transpose"));
    if (up != "transpose" && up != "nearest") throw ConfigError("upsample must be 'transpose' or 'nearest'");
    a.upsample = up == "nearest" ? UpsampleMode::nearest : UpsampleMode::transpose;
    a.batch_norm = j.value("batch_norm", a.batch_norm);
    a.output_dropout = j.value("output_dropout", a.output_dropout);
    a.input_height = j.value("input_height", a.input_height);
    a.input_width = j.value("input_width", a.input_width);
    a.critic_filters = j.value("critic_filters", a.critic_filters);
    a.critic_kernel = j.value("critic_kernel", a.critic_kernel);
    a.critic_dropout = j.value("critic_dropout", a.critic_dropout);
    a.leaky_alpha = j.value("leaky_alpha", a.leaky_alpha);
    return a;
  }
};

struct GpConfig {
  double lambda = 10.0;
  int n_critic = 3;
  AdamConfig critic_optimizer{1e-4, 0.0, 0.9, 1e-8};
  AdamConfig generator_optimizer{1e-4, 0.0, 0.9, 1e-8};

  void validate() const {
    if (!(lambda > 0)) throw ConfigError("gradient-penalty lambda must be > 0");
    if (n_critic < 1) throw ConfigError("n_critic must be >= 1");
    critic_optimizer.validate();
    generator_optimizer.validate();
  }
};

template <class T = float>
struct WganModel {
  Sequential<T> generator;
  Sequential<T> critic;
  std::int64_t noise_dim = 0;
  nlohmann::json arch = nlohmann::json::object();

  Tensor<T> noise(std::int64_t n, Rng& rng) const {
    Tensor<T> z(Shape{n, noise_dim});
    for (auto& v : z.values()) v = static_cast<T>(rng.normal());
    return z;
  }
};

inline std::vector<LayerSpec> generator_layers(const WganArch& a) {
  std::vector<LayerSpec> l;
  l.push_back(LayerSpec::dense(shape_numel(a.seed_shape)));
  l.push_back(LayerSpec::act(ActivationKind::leaky_relu, a.leaky_alpha));
  l.push_back(LayerSpec::reshape(a.seed_shape));
  auto up = [&](std::int64_t f) {
    if (a.upsample == UpsampleMode::transpose) {
      l.push_back(LayerSpec::conv_transpose(f, a.generator_kernel, 2));
    } else {
      l.push_back(LayerSpec::upsample(2));
      l.push_back(LayerSpec::conv(f, a.generator_kernel, 1));
    }
  };
  for (auto f : a.generator_filters) {
    up(f);
    if (a.batch_norm) l.push_back(LayerSpec::batch_norm());
    l.push_back(LayerSpec::act(ActivationKind::leaky_relu, a.leaky_alpha));
  }
  up(1);
  l.push_back(LayerSpec::act(ActivationKind::tanh));
  if (a.output_dropout > 0) l.push_back(LayerSpec::dropout(a.output_dropout));
  return l;
}

inline std::vector<LayerSpec> critic_layers(const WganArch& a) {
  std::vector<LayerSpec> l;
  for (auto f : a.critic_filters) {
    l.push_back(LayerSpec::conv(f, a.critic_kernel, 2));
    l.push_back(LayerSpec::act(ActivationKind::leaky_relu, a.leaky_alpha));
    if (a.critic_dropout > 0) l.push_back(LayerSpec::dropout(a.critic_dropout));
  }
  l.push_back(LayerSpec::flatten());
  l.push_back(LayerSpec::dense(1));
  return l;
}

template <class T = float>
WganModel<T> build_wgan(std::uint64_t seed, const WganArch& a = {}) {
  Rng seeds(seed);
  WganModel<T> m;
  m.noise_dim = a.noise_dim;
  m.arch = a.to_json();
  m.generator = Sequential<T>(generator_layers(a), Shape{a.noise_dim}, seeds.next_u64());
  m.critic = Sequential<T>(critic_layers(a), Shape{a.input_height, a.input_width, 1}, seeds.next_u64());
  if (m.generator.output_shape() != m.critic.input_shape())
    throw ConfigError("generator output " + shape_str(m.generator.output_shape()) + " does not match critic input " +
                      shape_str(m.critic.input_shape()));
  return m;
}

// WGAN from arbitrary generator / critic stacks (e.g. dense nets on toy data).
template <class T = float>
WganModel<T> make_wgan(Sequential<T> generator, Sequential<T> critic) {
  if (generator.input_shape().size() != 1) throw ConfigError("generator input must be a noise vector");
  if (generator.output_shape() != critic.input_shape())
    throw ConfigError("generator output " + shape_str(generator.output_shape()) + " does not match critic input " +
                      shape_str(critic.input_shape()));
  WganModel<T> m;
  m.noise_dim = generator.input_shape()[0];
  m.generator = std::move(generator);
  m.critic = std::move(critic);
  return m;
}

template <class T>
struct CriticLoss {
  Var<T> loss;
  double wasserstein = 0;  // mean D(real) - mean D(fake)
  double penalty = 0;      // mean (||grad|| - 1)^2, before lambda
};

// mean D(fake) - mean D(real) + lambda * mean (||grad_xhat D(xhat)|| - 1)^2
// with xhat = e*real + (1-e)*fake, e ~ U[0,1] per sample.
template <class T>
CriticLoss<T> critic_loss_with_gp(Sequential<T>& critic, const Tensor<T>& real, const Tensor<T>& fake, Rng& rng,
                                  const GpConfig& cfg) {
  if (real.shape() != fake.shape())
    throw DimensionError("critic_loss_with_gp: real " + shape_str(real.shape()) + " vs fake " + shape_str(fake.shape()));
  const auto n = real.dim(0);
  const auto per = static_cast<std::int64_t>(real.size()) / n;
  Tensor<T> xhat(real.shape());
  for (std::int64_t i = 0; i < n; ++i) {
    const T e = static_cast<T>(rng.uniform());
    for (std::int64_t j = 0; j < per; ++j) xhat[i * per + j] = e * real[i * per + j] + (T(1) - e) * fake[i * per + j];
  }
  ForwardOptions opt{Mode::train, &rng};
  const auto d_real = mean(critic.forward(Var<T>::constant(real), opt));
  const auto d_fake = mean(critic.forward(Var<T>::constant(fake), opt));
  const auto gp = mean(square(add_scalar(input_gradient_norm(critic, xhat), T(-1))));
  CriticLoss<T> out;
  out.wasserstein = static_cast<double>(d_real.value().item() - d_fake.value().item());
  out.penalty = static_cast<double>(gp.value().item());
  out.loss = add(sub(d_fake, d_real), scale(gp, static_cast<T>(cfg.lambda)));
  return out;
}

// -mean D(G(z)).
template <class T>
Var<T> generator_loss(Sequential<T>& generator, Sequential<T>& critic, const Tensor<T>& noise, Rng& rng) {
  ForwardOptions opt{Mode::train, &rng};
  const auto fake = generator.forward(Var<T>::constant(noise), opt);
  return neg(mean(critic.forward(fake, opt)));
}

}  // namespace sdx::generative
