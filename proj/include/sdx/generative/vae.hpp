#pragma once

#include <string>
#include <vector>

#include "sdx/autodiff.hpp"

namespace sdx::generative {

// Convolutional VAE. Encoder: stride-2 "same" convs + relu, flatten, dense
// relu stack, then linear mu / log-variance heads. Decoder mirrors it with
// dense relu layers, a reshape to the encoder's last feature map, stride-2
// transposed convs + relu, and a final transposed conv producing logits.
struct VaeArch {
  std::int64_t input_height = 512;
  std::int64_t input_width = 32;
  std::vector<std::int64_t> encoder_filters = {64, 128, 256, 512, 1024};
  std::int64_t kernel = 5;
  std::vector<std::int64_t> encoder_dense = {1024, 1024};
  std::int64_t latent = 512;
  std::vector<std::int64_t> decoder_dense = {1024, 1024};
  std::vector<std::int64_t> decoder_filters = {512, 256, 128, 64};
  std::int64_t output_kernel = 3;

  void validate() const {
    if (encoder_filters.empty()) throw ConfigError("VAE needs at least one encoder conv");
    if (decoder_filters.size() + 1 != encoder_filters.size())
      throw ConfigError("VAE decoder must have one transposed conv fewer than the encoder has convs (" +
                        std::to_string(decoder_filters.size()) + " vs " + std::to_string(encoder_filters.size()) + ")");
    if (latent < 1) throw ConfigError("VAE latent size must be >= 1");
  }

  nlohmann::json to_json() const {
    return {{"input_height", input_height},       {"input_width", input_width},   {"encoder_filters", encoder_filters},
            {"kernel", kernel},                   {"encoder_dense", encoder_dense}, {"latent", latent},
            {"decoder_dense", decoder_dense},     {"decoder_filters", decoder_filters},
            {"output_kernel", output_kernel}};
  }

  static VaeArch from_json(const nlohmann::json& j) {
    VaeArch a;
    a.input_height = j.value("input_height", a.input_height);
    a.input_width = j.value("input_width", a.input_width);
    a.encoder_filters = j.value("encoder_filters", a.encoder_filters);
    a.kernel = j.value("kernel", a.kernel);
    a.encoder_dense = j.value("encoder_dense", a.encoder_dense);
    a.latent = j.value("latent", a.latent);
    a.decoder_dense = j.value("decoder_dense", a.decoder_dense);
    a.decoder_filters = j.value("decoder_filters", a.decoder_filters);
    a.output_kernel = j.value("output_kernel", a.output_kernel);
    return a;
  }
};

template <class T = float>
struct VaeModel {
  VaeArch arch;
  Sequential<T> encoder;
  Sequential<T> mu_head;
  Sequential<T> logvar_head;
  Sequential<T> decoder;

  Shape encoder_feature_shape() const {
    const auto& shapes = encoder.layer_shapes();
    return shapes[2 * arch.encoder_filters.size() - 1];
  }
  std::int64_t flatten_size() const { return shape_numel(encoder_feature_shape()); }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    for (auto* net : {&encoder, &mu_head, &logvar_head, &decoder})
      for (auto* p : net->parameters()) out.push_back(p);
    return out;
  }

  std::int64_t parameter_count() const {
    return encoder.parameter_count() + mu_head.parameter_count() + logvar_head.parameter_count() +
           decoder.parameter_count();
  }

  // Decoder probabilities (sigmoid of logits) for latent codes [n, latent].
  Tensor<T> decode(const Tensor<T>& z) {
    NoGrad ng;
    return sigmoid(decoder.forward(Var<T>::constant(z), {Mode::eval})).value();
  }
};

template <class T = float>
VaeModel<T> build_vae(std::uint64_t seed, const VaeArch& arch = {}) {
  arch.validate();
  VaeModel<T> m;
  m.arch = arch;
  Rng seeds(seed);
  std::vector<LayerSpec> enc;
  for (auto f : arch.encoder_filters) {
    enc.push_back(LayerSpec::conv(f, arch.kernel, 2));
    enc.push_back(LayerSpec::act(ActivationKind::relu));
  }
  enc.push_back(LayerSpec::flatten());
  for (auto u : arch.encoder_dense) {
    enc.push_back(LayerSpec::dense(u));
    enc.push_back(LayerSpec::act(ActivationKind::relu));
  }
  m.encoder = Sequential<T>(enc, Shape{arch.input_height, arch.input_width, 1}, seeds.next_u64());
  const Shape feat = m.encoder_feature_shape();
  const Shape code = m.encoder.output_shape();
  m.mu_head = Sequential<T>({LayerSpec::dense(arch.latent)}, code, seeds.next_u64());
  m.logvar_head = Sequential<T>({LayerSpec::dense(arch.latent)}, code, seeds.next_u64());

  std::vector<LayerSpec> dec;
  for (auto u : arch.decoder_dense) {
    dec.push_back(LayerSpec::dense(u));
    dec.push_back(LayerSpec::act(ActivationKind::relu));
  }
  dec.push_back(LayerSpec::dense(shape_numel(feat)));
  dec.push_back(LayerSpec::act(ActivationKind::relu));
  dec.push_back(LayerSpec::reshape(feat));
  for (auto f : arch.decoder_filters) {
    dec.push_back(LayerSpec::conv_transpose(f, arch.kernel, 2));
    dec.push_back(LayerSpec::act(ActivationKind::relu));
  }
  dec.push_back(LayerSpec::conv_transpose(1, arch.output_kernel, 2));
  m.decoder = Sequential<T>(dec, Shape{arch.latent}, seeds.next_u64());
  if (m.decoder.output_shape() != (Shape{arch.input_height, arch.input_width, 1}))
    throw ConfigError("VAE decoder produces " + shape_str(m.decoder.output_shape()) + ", expected " +
                      shape_str(Shape{arch.input_height, arch.input_width, 1}));
  return m;
}

template <class T>
struct ElboTerms {
  Var<T> loss;
  double recon = 0;
  double kl = 0;
};

// -1/2 * mean over batch of sum_j (1 + logvar - mu^2 - exp(logvar)).
template <class T>
Var<T> kl_divergence(const Var<T>& mu, const Var<T>& logvar) {
  const auto n = static_cast<T>(mu.shape()[0]);
  return scale(sum(add_scalar(sub(sub(logvar, square(mu)), exp(logvar)), T(1))), T(-0.5) / n);
}

// ELBO with a caller-supplied reparameterization noise eps [n, latent].
template <class T>
ElboTerms<T> vae_elbo_loss(VaeModel<T>& m, const Tensor<T>& batch, const Tensor<T>& eps) {
  for (T v : batch.values())
    if (!(v >= T(0) && v <= T(1))) throw DataError("VAE batch values must lie in [0, 1]");
  const auto x = Var<T>::constant(batch);
  const auto h = m.encoder.forward(x, {Mode::train});
  const auto mu = m.mu_head.forward(h, {Mode::train});
  const auto logvar = m.logvar_head.forward(h, {Mode::train});
  if (eps.shape() != mu.shape())
    throw DimensionError("reparameterization noise " + shape_str(eps.shape()) + " does not match " + shape_str(mu.shape()));
  const auto z = add(mu, mul(exp(scale(logvar, T(0.5))), Var<T>::constant(eps)));
  const auto logits = m.decoder.forward(z, {Mode::train});
  const auto recon = bce_with_logits(logits, batch);
  const auto kl = kl_divergence(mu, logvar);
  ElboTerms<T> out;
  out.recon = static_cast<double>(recon.value().item());
  out.kl = static_cast<double>(kl.value().item());
  out.loss = add(recon, kl);
  return out;
}

template <class T>
ElboTerms<T> vae_elbo_loss(VaeModel<T>& m, const Tensor<T>& batch, Rng& rng) {
  Tensor<T> eps(Shape{batch.dim(0), m.arch.latent});
  for (auto& v : eps.values()) v = static_cast<T>(rng.normal());
  return vae_elbo_loss(m, batch, eps);
}

// Deterministic reconstruction through the posterior mean.
template <class T>
Tensor<T> vae_reconstruct(VaeModel<T>& m, const Tensor<T>& batch) {
  NoGrad ng;
  const auto h = m.encoder.forward(Var<T>::constant(batch), {Mode::eval});
  return m.decode(m.mu_head.forward(h, {Mode::eval}).value());
}

}  // namespace sdx::generative
