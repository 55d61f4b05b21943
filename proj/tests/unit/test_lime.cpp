#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "sdx/lime/lime.hpp"
#include "support/tempdir.hpp"

using namespace sdx;
using namespace sdx::lime;

namespace {

std::vector<double> superpixel_means(const Tensor<float>& batch, std::int64_t i, const SuperpixelMap& seg) {
  std::vector<double> sum(static_cast<std::size_t>(seg.segments), 0.0), cnt(sum.size(), 0.0);
  const auto px = seg.labels.size();
  for (std::size_t p = 0; p < px; ++p) {
    sum[static_cast<std::size_t>(seg.labels[p])] += batch[static_cast<std::size_t>(i) * px + p];
    cnt[static_cast<std::size_t>(seg.labels[p])] += 1;
  }
  for (std::size_t k = 0; k < sum.size(); ++k) sum[k] /= cnt[k];
  return sum;
}

// Two-class probabilities with P(class 1) = clamp(score).
PredictFn two_class(std::function<double(const Tensor<float>&, std::int64_t)> score) {
  return [score](const Tensor<float>& b) {
    Tensor<float> p(Shape{b.dim(0), 2});
    for (std::int64_t i = 0; i < b.dim(0); ++i) {
      const double s = std::clamp(score(b, i), 0.0, 1.0);
      p[static_cast<std::size_t>(2 * i)] = static_cast<float>(1 - s);
      p[static_cast<std::size_t>(2 * i + 1)] = static_cast<float>(s);
    }
    return p;
  };
}

std::vector<float> blocky_image(const SuperpixelMap& seg, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> level(static_cast<std::size_t>(seg.segments));
  for (auto& v : level) v = rng.uniform();
  std::vector<float> img(seg.labels.size());
  for (std::size_t p = 0; p < img.size(); ++p)
    img[p] = static_cast<float>(level[static_cast<std::size_t>(seg.labels[p])] + 0.02 * rng.normal());
  return img;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ma += a[i], mb += b[i];
  ma /= a.size();
  mb /= b.size();
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

struct Planted {
  SuperpixelMap seg = grid_segment(16);
  std::vector<float> image;
  std::vector<double> coef;
  PredictFn predict;

  explicit Planted(std::uint64_t seed) {
    image = blocky_image(seg, seed);
    Rng rng(seed + 100);
    coef.resize(64);
    for (auto& c : coef) c = rng.normal();
    predict = two_class([this](const Tensor<float>& b, std::int64_t i) {
      const auto m = superpixel_means(b, i, seg);
      double s = 0.5;
      for (std::size_t k = 0; k < m.size(); ++k) s += 0.004 * coef[k] * m[k];
      return s;
    });
  }

  // Effect of switching superpixel k on under mean replacement.
  std::vector<double> truth() const {
    double g = 0;
    for (float v : image) g += v;
    g /= image.size();
    const auto means = superpixel_means(
        [&] {
          Tensor<float> t(Shape{1, 128, 128, 1});
          for (std::size_t p = 0; p < image.size(); ++p) t[p] = image[p];
          return t;
        }(),
        0, seg);
    std::vector<double> out(64);
    for (std::size_t k = 0; k < 64; ++k) out[k] = 0.004 * coef[k] * (means[k] - g);
    return out;
  }
};

}  // namespace

TEST(GridSegment, CellSixteenGivesSixtyFour) {
  const auto m = grid_segment(16);
  EXPECT_EQ(m.segments, 64);
  EXPECT_EQ(m.labels.size(), 128u * 128u);
}

TEST(GridSegment, WholeImageCell) {
  const auto m = grid_segment(128);
  EXPECT_EQ(m.segments, 1);
  for (int v : m.labels) EXPECT_EQ(v, 0);
}

TEST(GridSegment, IndexingOracleAndCoverage) {
  for (int cell : {1, 4, 16, 32}) {
    const auto m = grid_segment(cell);
    std::vector<int> hits(static_cast<std::size_t>(m.segments), 0);
    for (int r = 0; r < 128; ++r)
      for (int c = 0; c < 128; ++c) {
        ASSERT_EQ(m.at(r, c), (r / cell) * (128 / cell) + c / cell);
        ++hits[static_cast<std::size_t>(m.at(r, c))];
      }
    for (int h : hits) EXPECT_EQ(h, cell * cell);
  }
}

TEST(GridSegment, NonDivisorRejected) {
  EXPECT_THROW(grid_segment(12), ConfigError);
  EXPECT_THROW(grid_segment(0), ConfigError);
}

TEST(Explain, PlantedSingleFeatureDominates) {
  const auto seg = grid_segment(16);
  const auto img = blocky_image(seg, 1);
  const int k = 27;
  const auto f = two_class([&](const Tensor<float>& b, std::int64_t i) { return superpixel_means(b, i, seg)[k]; });
  SurrogateConfig cfg;
  cfg.replacement = Replacement::zero;
  const auto e = explain_instance(f, img, seg, cfg);
  ASSERT_EQ(e.weights.size(), 64u);
  for (int j = 0; j < 64; ++j) {
    if (j == k) continue;
    EXPECT_LT(std::abs(e.weights[j]), std::abs(e.weights[k]));
  }
}

TEST(Explain, ConstantModelGivesZeroWeights) {
  const auto seg = grid_segment(16);
  const auto e = explain_instance(two_class([](const Tensor<float>&, std::int64_t) { return 0.3; }), blocky_image(seg, 2), seg);
  for (double w : e.weights) EXPECT_LE(std::abs(w), 1e-6);
  EXPECT_EQ(e.target_class, 0);
  EXPECT_NEAR(e.intercept, 0.7, 1e-6);
}

TEST(Explain, PlantedLinearModelRecovered) {
  Planted p(3);
  SurrogateConfig cfg;
  cfg.target_class = 1;
  const auto e = explain_instance(p.predict, p.image, p.seg, cfg);
  EXPECT_GE(pearson(e.weights, p.truth()), 0.95);
  EXPECT_GT(e.fidelity, 0.9);
  EXPECT_LE(e.fidelity, 1.0);
}

TEST(Explain, MoreSamplesChangeCoefficientsLittle) {
  Planted p(4);
  SurrogateConfig small, big;
  small.target_class = big.target_class = 1;
  big.num_samples = 4000;
  const auto a = explain_instance(p.predict, p.image, p.seg, small);
  const auto b = explain_instance(p.predict, p.image, p.seg, big);
  double diff = 0, norm = 0;
  for (std::size_t k = 0; k < 64; ++k) {
    diff += (a.weights[k] - b.weights[k]) * (a.weights[k] - b.weights[k]);
    norm += b.weights[k] * b.weights[k];
  }
  EXPECT_LE(std::sqrt(diff / norm), 0.10);
}

TEST(Explain, SeedDeterministic) {
  Planted p(5);
  const auto a = explain_instance(p.predict, p.image, p.seg);
  const auto b = explain_instance(p.predict, p.image, p.seg);
  SurrogateConfig other;
  other.seed = 9;
  const auto c = explain_instance(p.predict, p.image, p.seg, other);
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_NE(a.weights, c.weights);
}

TEST(Explain, FirstSampleIsUnperturbedImage) {
  const auto seg = grid_segment(32);
  const auto img = blocky_image(seg, 6);
  bool first = true;
  const PredictFn f = [&](const Tensor<float>& b) {
    if (first) {
      for (std::size_t p = 0; p < img.size(); ++p) EXPECT_EQ(b[p], img[p]);
      first = false;
    }
    return two_class([](const Tensor<float>&, std::int64_t) { return 0.7; })(b);
  };
  SurrogateConfig cfg;
  cfg.num_samples = 20;
  const auto e = explain_instance(f, img, seg, cfg);
  EXPECT_EQ(e.target_class, 1);
  EXPECT_NEAR(e.original_probability, 0.7, 1e-6);
}

TEST(Explain, NonProbabilityOutputRejected) {
  const auto seg = grid_segment(32);
  const PredictFn bad = [](const Tensor<float>& b) {
    Tensor<float> p(Shape{b.dim(0), 2});
    for (auto& v : p.values()) v = 0.9f;
    return p;
  };
  EXPECT_THROW(explain_instance(bad, blocky_image(seg, 7), seg), DataError);
}

TEST(Explain, ConfigPreconditions) {
  const auto seg = grid_segment(16);
  SurrogateConfig c;
  c.num_samples = 10;
  EXPECT_THROW(explain_instance(two_class([](const Tensor<float>&, std::int64_t) { return 0.5; }), blocky_image(seg, 1), seg, c),
               ConfigError);
  c = {};
  c.kernel_width = 0;
  EXPECT_THROW(c.validate(64), ConfigError);
  c = {};
  c.alpha = -1;
  EXPECT_THROW(c.validate(64), ConfigError);
}

TEST(Heatmap, SingleNonzeroWeightLightsOneCell) {
  const auto seg = grid_segment(16);
  Explanation e;
  e.weights.assign(64, 0.0);
  e.weights[10] = -0.4;
  const auto h = render_heatmap(e, seg);
  for (std::size_t p = 0; p < h.size(); ++p) EXPECT_EQ(h[p], seg.labels[p] == 10 ? 1.0f : 0.0f);
}

TEST(Heatmap, EqualWeightsGiveZeros) {
  const auto seg = grid_segment(16);
  Explanation e;
  e.weights.assign(64, 0.2);
  for (float v : render_heatmap(e, seg)) EXPECT_EQ(v, 0.0f);
}

TEST(Heatmap, ConstantWithinSuperpixels) {
  Planted p(8);
  const auto e = explain_instance(p.predict, p.image, p.seg);
  const auto h = render_heatmap(e, p.seg);
  std::vector<float> first(64, -1.0f);
  for (std::size_t q = 0; q < h.size(); ++q) {
    auto& f = first[static_cast<std::size_t>(p.seg.labels[q])];
    if (f < 0) f = h[q];
    EXPECT_EQ(h[q], f);
  }
}

TEST(Heatmap, WritesPngAndSidecar) {
  sdx::testing::TempDir dir;
  const auto seg = grid_segment(16);
  Explanation e;
  e.weights.assign(64, 0.0);
  e.weights[0] = 1;
  write_heatmap(dir.file("h"), e, seg, SurrogateConfig{});
  std::ifstream png(dir.file("h.png"), std::ios::binary);
  char sig[8];
  png.read(sig, 8);
  EXPECT_EQ(std::string(sig + 1, 3), "PNG");
  std::ifstream js(dir.file("h.json"));
  const auto j = nlohmann::json::parse(js);
  EXPECT_EQ(j["weights"].size(), 64u);
  EXPECT_EQ(j["config"]["num_samples"], 1000);
}
