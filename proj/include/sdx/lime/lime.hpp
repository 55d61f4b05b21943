#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sdx/autodiff/tensor.hpp"
#include "sdx/core/rng.hpp"
#include "sdx/io/png.hpp"

namespace sdx::lime {

struct SuperpixelMap {
  int height = 0;
  int width = 0;
  int segments = 0;
  std::vector<int> labels;  // row-major

  int at(int r, int c) const { return labels[static_cast<std::size_t>(r) * width + c]; }
};

// Equal square cells labelled row-major.
inline SuperpixelMap grid_segment(int height, int width, int cell) {
  if (cell < 1 || height % cell != 0 || width % cell != 0)
    throw ConfigError("superpixel cell " + std::to_string(cell) + " must divide the image size " +
                      std::to_string(height) + "x" + std::to_string(width));
  SuperpixelMap m;
  m.height = height;
  m.width = width;
  const int per_row = width / cell;
  m.segments = (height / cell) * per_row;
  m.labels.resize(static_cast<std::size_t>(height) * width);
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c) m.labels[static_cast<std::size_t>(r) * width + c] = (r / cell) * per_row + c / cell;
  return m;
}

inline SuperpixelMap grid_segment(int cell = 16) { return grid_segment(128, 128, cell); }

enum class Replacement { mean, zero };

struct SurrogateConfig {
  int num_samples = 1000;
  double kernel_width = 0.25;
  double alpha = 1.0;
  Replacement replacement = Replacement::mean;
  std::optional<int> target_class;  // default: predicted class of the image
  int batch_size = 64;
  std::uint64_t seed = 0;

  void validate(int segments) const {
    if (num_samples < segments)
      throw ConfigError("LIME num_samples " + std::to_string(num_samples) + " must be >= the superpixel count " +
                        std::to_string(segments));
    if (!(kernel_width > 0)) throw ConfigError("LIME kernel_width must be > 0");
    if (!(alpha >= 0)) throw ConfigError("LIME ridge alpha must be >= 0");
    if (batch_size < 1) throw ConfigError("LIME batch_size must be >= 1");
  }

  nlohmann::json to_json() const {
    nlohmann::json j = {{"num_samples", num_samples},
                        {"kernel_width", kernel_width},
                        {"alpha", alpha},
                        {"replacement", replacement == Replacement::mean ? "mean" : "zero"},
                        {"seed", seed}};
    if (target_class) j["target_class"] = *target_class;
    return j;
  }
};

struct Explanation {
  std::vector<double> weights;  // one per superpixel
  double intercept = 0;
  double fidelity = 0;  // weighted R^2 of the surrogate over the samples
  int target_class = 0;
  double original_probability = 0;
  double local_prediction = 0;  // surrogate at the all-ones mask
};

// Images [n, H, W, 1] -> class probabilities [n, C].
using PredictFn = std::function<Tensor<float>(const Tensor<float>&)>;

namespace detail {

inline void check_probabilities(const Tensor<float>& p, std::int64_t n) {
  if (p.rank() != 2 || p.dim(0) != n || p.dim(1) < 1)
    throw DataError("predict function must return [" + std::to_string(n) + ", C] probabilities, got " +
                    shape_str(p.shape()));
  const auto c = p.dim(1);
  for (std::int64_t i = 0; i < n; ++i) {
    double s = 0;
    for (std::int64_t j = 0; j < c; ++j) {
      const double v = p[i * c + j];
      if (!(v >= -1e-6 && v <= 1.0 + 1e-6)) throw DataError("predict function returned a value outside [0, 1] in row " + std::to_string(i));
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-4) throw DataError("predict function row " + std::to_string(i) + " sums to " + std::to_string(s));
  }
}

}  // namespace detail

// Weighted ridge fit of target-class probability on binary superpixel masks
// (intercept unpenalized), sample weights exp(-d^2 / sigma^2) with d the
// cosine distance to the all-ones mask.
inline Explanation explain_instance(const PredictFn& predict, const std::vector<float>& image, const SuperpixelMap& seg,
                                    const SurrogateConfig& cfg = {}) {
  const int s = seg.segments;
  cfg.validate(s);
  const auto px = static_cast<std::size_t>(seg.height) * seg.width;
  if (image.size() != px)
    throw DimensionError("image has " + std::to_string(image.size()) + " pixels, superpixel map covers " + std::to_string(px));

  double fill = 0;
  if (cfg.replacement == Replacement::mean) {
    for (float v : image) fill += v;
    fill /= static_cast<double>(px);
  }

  const int n = cfg.num_samples;
  Rng rng(cfg.seed);
  Eigen::MatrixXd masks(n, s);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < s; ++k) masks(i, k) = i == 0 ? 1.0 : (rng.uniform() < 0.5 ? 1.0 : 0.0);

  Eigen::VectorXd y(n);
  int target = cfg.target_class.value_or(-1);
  for (int start = 0; start < n; start += cfg.batch_size) {
    const int b = std::min(cfg.batch_size, n - start);
    Tensor<float> batch(Shape{b, seg.height, seg.width, 1});
    for (int i = 0; i < b; ++i)
      for (std::size_t p = 0; p < px; ++p)
        batch[static_cast<std::size_t>(i) * px + p] =
            masks(start + i, seg.labels[p]) > 0 ? image[p] : static_cast<float>(fill);
    const auto probs = predict(batch);
    detail::check_probabilities(probs, b);
    const auto c = probs.dim(1);
    if (target < 0) {
      std::int64_t best = 0;
      for (std::int64_t j = 1; j < c; ++j)
        if (probs[j] > probs[best]) best = j;
      target = static_cast<int>(best);
    }
    if (target >= c) throw ConfigError("target class " + std::to_string(target) + " outside " + std::to_string(c) + " classes");
    for (int i = 0; i < b; ++i) y[start + i] = probs[static_cast<std::size_t>(i) * c + target];
  }

  Eigen::VectorXd w(n);
  for (int i = 0; i < n; ++i) {
    const double on = masks.row(i).sum();
    const double d = on > 0 ? 1.0 - on / (std::sqrt(on) * std::sqrt(static_cast<double>(s))) : 1.0;
    w[i] = std::exp(-d * d / (cfg.kernel_width * cfg.kernel_width));
  }

  Eigen::MatrixXd z(n, s + 1);
  z.col(0).setOnes();
  z.rightCols(s) = masks;
  const Eigen::MatrixXd zw = z.array().colwise() * w.array();
  Eigen::MatrixXd a = z.transpose() * zw;
  a.diagonal().tail(s).array() += cfg.alpha;
  const Eigen::VectorXd beta = a.ldlt().solve(zw.transpose() * y);
  if (!beta.allFinite()) throw NumericalError("LIME surrogate fit produced non-finite coefficients");

  Explanation e;
  e.target_class = target;
  e.intercept = beta[0];
  e.weights.assign(beta.data() + 1, beta.data() + 1 + s);
  e.original_probability = y[0];
  e.local_prediction = beta.sum();
  const Eigen::VectorXd fit = z * beta;
  const double wsum = w.sum();
  const double ybar = w.dot(y) / wsum;
  const double ss_res = (w.array() * (y - fit).array().square()).sum();
  const double ss_tot = (w.array() * (y.array() - ybar).square()).sum();
  e.fidelity = ss_tot > 0 ? 1.0 - ss_res / ss_tot : (ss_res == 0 ? 1.0 : 0.0);
  return e;
}

// Per-pixel |weight| of its superpixel, min-max scaled to [0, 1].
inline std::vector<float> render_heatmap(const Explanation& e, const SuperpixelMap& seg) {
  if (static_cast<int>(e.weights.size()) != seg.segments)
    throw DimensionError("explanation has " + std::to_string(e.weights.size()) + " weights for " +
                         std::to_string(seg.segments) + " superpixels");
  double lo = std::abs(e.weights[0]), hi = lo;
  for (double v : e.weights) {
    lo = std::min(lo, std::abs(v));
    hi = std::max(hi, std::abs(v));
  }
  std::vector<float> out(seg.labels.size(), 0.0f);
  if (hi > lo)
    for (std::size_t p = 0; p < out.size(); ++p)
      out[p] = static_cast<float>((std::abs(e.weights[static_cast<std::size_t>(seg.labels[p])]) - lo) / (hi - lo));
  return out;
}

inline nlohmann::json to_json(const Explanation& e) {
  return {{"weights", e.weights},
          {"intercept", e.intercept},
          {"fidelity", e.fidelity},
          {"target_class", e.target_class},
          {"original_probability", e.original_probability},
          {"local_prediction", e.local_prediction}};
}

// Writes <base>.png and <base>.json.
inline void write_heatmap(const std::string& base, const Explanation& e, const SuperpixelMap& seg,
                          const SurrogateConfig& cfg, const nlohmann::json& extra = {}) {
  io::write_png(base + ".png", render_heatmap(e, seg), seg.height, seg.width);
  auto j = to_json(e);
  j["config"] = cfg.to_json();
  j["segments"] = seg.segments;
  if (!extra.is_null()) j["item"] = extra;
  std::ofstream f(base + ".json");
  if (!f) throw DataError("cannot open '" + base + ".json' for writing");
  f << j.dump(2) << '\n';
}

}  // namespace sdx::lime
