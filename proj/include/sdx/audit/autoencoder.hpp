#pragma once

#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "sdx/autodiff.hpp"
#include "sdx/spectral/image_set.hpp"

namespace sdx::audit {

using spectral::ImageSet;

inline constexpr std::int64_t kLatentDim = 1024;

struct LatentPoint {
  std::vector<float> vector;
  spectral::Origin origin = spectral::Origin::real;
  eeg::Label label = eeg::Label::norm;
};

// Conv encoder (stride-2 "same" convs + relu) ending in a linear 1024-unit
// bottleneck; the decoder mirrors it and emits sigmoid pixels.
struct AutoencoderConfig {
  std::vector<std::int64_t> encoder_filters = {64, 128, 256, 512, 1024};
  std::int64_t kernel = 5;
  std::int64_t output_kernel = 3;
  int epochs = 50;
  int batch_size = 32;
  AdamConfig optimizer{1e-4};
  std::uint64_t seed = 0;

  void validate() const {
    if (encoder_filters.empty()) throw ConfigError("autoencoder needs at least one encoder conv");
    if (epochs < 1) throw ConfigError("autoencoder epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("autoencoder batch_size must be >= 1");
    optimizer.validate();
  }

  nlohmann::json to_json() const {
    return {{"encoder_filters", encoder_filters}, {"kernel", kernel},       {"output_kernel", output_kernel},
            {"bottleneck", kLatentDim},         {"epochs", epochs},       {"batch_size", batch_size},
            {"lr", optimizer.learning_rate},               {"seed", seed}};
  }

  static AutoencoderConfig from_json(const nlohmann::json& j) {
    AutoencoderConfig c;
    c.encoder_filters = j.value("encoder_filters", c.encoder_filters);
    c.kernel = j.value("kernel", c.kernel);
    c.output_kernel = j.value("output_kernel", c.output_kernel);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.optimizer.learning_rate = j.value("lr", c.optimizer.learning_rate);
    c.seed = j.value("seed", c.seed);
    if (j.value("bottleneck", kLatentDim) != kLatentDim)
      throw ConfigError("autoencoder bottleneck is fixed at " + std::to_string(kLatentDim));
    return c;
  }
};

template <class T = float>
struct LatentAutoencoder {
  Sequential<T> encoder;
  Sequential<T> decoder;
  std::vector<double> loss_history;  // mean train MSE per epoch

  std::int64_t bottleneck() const { return encoder.output_shape()[0]; }

  Tensor<T> encode(const Tensor<T>& x) {
    NoGrad ng;
    return encoder.forward(Var<T>::constant(x), {Mode::eval}).value();
  }

  Tensor<T> reconstruct(const Tensor<T>& x) {
    NoGrad ng;
    return sigmoid(decoder.forward(encoder.forward(Var<T>::constant(x), {Mode::eval}), {Mode::eval})).value();
  }

  std::vector<LatentPoint> embed(const ImageSet& set, int chunk = 32) {
    if (set.height != encoder.input_shape()[0] || set.width != encoder.input_shape()[1])
      throw DimensionError("autoencoder expects " + shape_str(encoder.input_shape()) + " images, got " +
                           std::to_string(set.height) + "x" + std::to_string(set.width));
    std::vector<LatentPoint> out;
    out.reserve(set.size());
    for (std::size_t s = 0; s < set.size(); s += static_cast<std::size_t>(chunk)) {
      std::vector<std::size_t> idx(std::min(set.size() - s, static_cast<std::size_t>(chunk)));
      std::iota(idx.begin(), idx.end(), s);
      const auto z = encode(set.batch<T>(idx));
      const auto d = static_cast<std::size_t>(bottleneck());
      for (std::size_t k = 0; k < idx.size(); ++k) {
        LatentPoint p;
        p.vector.assign(z.values().begin() + static_cast<long>(k * d), z.values().begin() + static_cast<long>((k + 1) * d));
        p.origin = set.provenance[idx[k]].origin;
        p.label = set.labels[idx[k]];
        out.push_back(std::move(p));
      }
    }
    return out;
  }

  // Mean per-pixel squared error over a set.
  double reconstruction_mse(const ImageSet& set, int chunk = 32) {
    double total = 0;
    for (std::size_t s = 0; s < set.size(); s += static_cast<std::size_t>(chunk)) {
      std::vector<std::size_t> idx(std::min(set.size() - s, static_cast<std::size_t>(chunk)));
      std::iota(idx.begin(), idx.end(), s);
      const auto x = set.batch<T>(idx);
      const auto r = reconstruct(x);
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = static_cast<double>(r[i]) - static_cast<double>(x[i]);
        total += d * d;
      }
    }
    return total / static_cast<double>(set.size() * set.image_size());
  }
};

template <class T = float>
LatentAutoencoder<T> build_latent_autoencoder(std::int64_t h, std::int64_t w, const AutoencoderConfig& cfg) {
  cfg.validate();
  Rng seeds(cfg.seed);
  LatentAutoencoder<T> m;
  std::vector<LayerSpec> enc;
  for (auto f : cfg.encoder_filters) {
    enc.push_back(LayerSpec::conv(f, cfg.kernel, 2));
    enc.push_back(LayerSpec::act(ActivationKind::relu));
  }
  enc.push_back(LayerSpec::flatten());
  enc.push_back(LayerSpec::dense(kLatentDim));
  m.encoder = Sequential<T>(enc, Shape{h, w, 1}, seeds.next_u64());
  const Shape feat = m.encoder.layer_shapes()[2 * cfg.encoder_filters.size() - 1];

  std::vector<LayerSpec> dec;
  dec.push_back(LayerSpec::dense(shape_numel(feat)));
  dec.push_back(LayerSpec::act(ActivationKind::relu));
  dec.push_back(LayerSpec::reshape(feat));
  for (std::size_t i = cfg.encoder_filters.size() - 1; i-- > 0;) {
    dec.push_back(LayerSpec::conv_transpose(cfg.encoder_filters[i], cfg.kernel, 2));
    dec.push_back(LayerSpec::act(ActivationKind::relu));
  }
  dec.push_back(LayerSpec::conv_transpose(1, cfg.output_kernel, 2));
  m.decoder = Sequential<T>(dec, Shape{kLatentDim}, seeds.next_u64());
  if (m.decoder.output_shape() != (Shape{h, w, 1}))
    throw ConfigError("autoencoder decoder produces " + shape_str(m.decoder.output_shape()) + " for " +
                      shape_str(Shape{h, w, 1}) + " inputs; height and width must be divisible by 2^" +
                      std::to_string(cfg.encoder_filters.size()));
  return m;
}

// Fits on real training spectrograms (native size, values in [0, 1]) with a
// pixel MSE objective.
template <class T = float>
LatentAutoencoder<T> fit_latent_autoencoder(const ImageSet& real_train, const AutoencoderConfig& cfg,
                                            const std::function<void(int, double)>& on_epoch = {}) {
  if (real_train.size() < 2) throw DataError("autoencoder training needs at least two images");
  for (const auto& p : real_train.provenance)
    if (p.origin != spectral::Origin::real)
      throw DataError("autoencoder is trained on real data only; found a " + std::string(spectral::origin_name(p.origin)) +
                      " item from '" + p.subject_id + "'");
  auto m = build_latent_autoencoder<T>(real_train.height, real_train.width, cfg);
  std::vector<Parameter<T>*> params = m.encoder.parameters();
  for (auto* p : m.decoder.parameters()) params.push_back(p);
  Rng rng(cfg.seed ^ 0xA5A5A5A5ULL);
  std::vector<std::size_t> order(real_train.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double sum = 0;
    for (std::size_t s = 0; s < order.size(); s += static_cast<std::size_t>(cfg.batch_size)) {
      const std::vector<std::size_t> idx(order.begin() + static_cast<long>(s),
                                         order.begin() + static_cast<long>(std::min(order.size(), s + cfg.batch_size)));
      const auto x = real_train.batch<T>(idx);
      const auto r = sigmoid(m.decoder.forward(m.encoder.forward(Var<T>::constant(x), {Mode::train}), {Mode::train}));
      auto loss = mean(square(sub(r, Var<T>::constant(x))));
      const double lv = static_cast<double>(loss.value().item());
      if (!std::isfinite(lv)) throw NumericalError("autoencoder loss became non-finite at epoch " + std::to_string(epoch));
      sum += lv * static_cast<double>(idx.size());
      backward(loss);
      adam_step(params, cfg.optimizer);
    }
    m.loss_history.push_back(sum / static_cast<double>(order.size()));
    if (on_epoch) on_epoch(epoch, m.loss_history.back());
  }
  return m;
}

// MSE of predicting every pixel of `eval` with the mean image of `fit`.
inline double mean_image_mse(const ImageSet& fit, const ImageSet& eval) {
  if (fit.image_size() != eval.image_size()) throw DimensionError("mean_image_mse: image sizes differ");
  std::vector<double> mean(fit.image_size(), 0.0);
  for (std::size_t i = 0; i < fit.size(); ++i)
    for (std::size_t p = 0; p < mean.size(); ++p) mean[p] += fit.image(i)[p];
  for (auto& v : mean) v /= static_cast<double>(fit.size());
  double total = 0;
  for (std::size_t i = 0; i < eval.size(); ++i)
    for (std::size_t p = 0; p < mean.size(); ++p) {
      const double d = eval.image(i)[p] - mean[p];
      total += d * d;
    }
  return total / static_cast<double>(eval.size() * eval.image_size());
}

}  // namespace sdx::audit
