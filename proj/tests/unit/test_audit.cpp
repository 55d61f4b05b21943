#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "sdx/audit/protocol.hpp"
#include "sdx/audit/tsne.hpp"
#include "support/tempdir.hpp"

using namespace sdx;
using namespace sdx::audit;
using spectral::Origin;

namespace {

AutoencoderConfig small_ae() {
  AutoencoderConfig c;
  c.encoder_filters = {4, 8};
  c.kernel = 3;
  c.epochs = 40;
  c.batch_size = 16;
  c.optimizer.learning_rate = 1e-3;
  c.seed = 3;
  return c;
}

// Images mixing two fixed smooth patterns with random weights.
ImageSet pattern_family(int n, std::uint64_t seed, Origin origin = Origin::real) {
  Rng rng(seed);
  const int h = 16, w = 8;
  ImageSet s;
  std::vector<float> img(h * w);
  for (int i = 0; i < n; ++i) {
    const double a = rng.uniform(), b = rng.uniform();
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double p1 = 0.5 + 0.5 * std::sin(0.4 * y);
        const double p2 = 0.5 + 0.5 * std::cos(0.7 * x + 0.2 * y);
        img[y * w + x] = static_cast<float>(0.1 + 0.4 * a * p1 + 0.4 * b * p2 + 0.01 * rng.normal());
      }
    s.push(img.data(), h, w, {"p" + std::to_string(seed) + "-" + std::to_string(i), 0, origin},
           i % 2 ? eeg::Label::sch : eeg::Label::norm);
  }
  return s;
}

Eigen::MatrixXd gaussian_rows(int n, int d, double shift, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd x(n, d);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < d; ++c) x(i, c) = rng.normal() + (c == 0 ? shift : 0.0);
  return x;
}

TsneConfig quick_tsne(double perplexity, int iterations = 300) {
  TsneConfig c;
  c.perplexity = perplexity;
  c.iterations = iterations;
  c.exaggeration_iterations = std::min(100, iterations);
  c.seed = 11;
  return c;
}

classifier::CnnArch tiny_cnn() {
  classifier::CnnArch a;
  a.conv_filters = {4};
  a.dense_units = 8;
  a.input_height = 8;
  a.input_width = 8;
  return a;
}

ImageSet separable_toy(int n, std::uint64_t seed, Origin origin = Origin::real) {
  Rng rng(seed);
  ImageSet s;
  for (int i = 0; i < n; ++i) {
    const bool pos = i % 2 == 0;
    double f1 = rng.uniform(0, 0.4), f2 = rng.uniform(0, 0.4);
    if (pos) f1 += 0.6;
    else f2 += 0.6;
    std::vector<float> img(64);
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) img[y * 8 + x] = static_cast<float>((x < 4 ? f1 : f2) + 0.05 * rng.normal());
    s.push(img.data(), 8, 8, {"t" + std::to_string(i), 0, origin}, pos ? eeg::Label::sch : eeg::Label::norm);
  }
  return s;
}

ProtocolConfig quick_protocol() {
  ProtocolConfig p;
  p.arch = tiny_cnn();
  p.per_class = 20;
  p.train.optimizer.learning_rate = 1e-2;
  p.train.epochs = 5;
  p.train.batch_size = 16;
  p.seed = 5;
  return p;
}

}  // namespace

TEST(LatentAutoencoder, ReferenceBottleneckIs1024) {
  const auto m = build_latent_autoencoder<float>(512, 32, AutoencoderConfig{});
  EXPECT_EQ(m.bottleneck(), 1024);
  EXPECT_EQ(m.encoder.output_shape(), (Shape{1024}));
  EXPECT_EQ(m.decoder.output_shape(), (Shape{512, 32, 1}));
}

TEST(LatentAutoencoder, IndivisibleInputRejected) {
  EXPECT_THROW(build_latent_autoencoder<float>(18, 8, small_ae()), ConfigError);
}

TEST(LatentAutoencoder, BottleneckOverrideRejected) {
  EXPECT_THROW(AutoencoderConfig::from_json({{"bottleneck", 512}}), ConfigError);
}

TEST(LatentAutoencoder, BeatsMeanImageOnHeldOutData) {
  const auto train = pattern_family(160, 1);
  const auto held = pattern_family(40, 2);
  auto m = fit_latent_autoencoder<float>(train, small_ae());
  ASSERT_EQ(m.loss_history.size(), 40u);
  EXPECT_LT(m.loss_history.back(), m.loss_history.front());
  const double ae = m.reconstruction_mse(held);
  const double baseline = mean_image_mse(train, held);
  EXPECT_LT(ae, baseline);
}

TEST(LatentAutoencoder, IdenticalInputsGiveIdenticalLatents) {
  auto cfg = small_ae();
  cfg.epochs = 2;
  auto m = fit_latent_autoencoder<float>(pattern_family(20, 1), cfg);
  auto one = pattern_family(1, 9);
  ImageSet twice = one;
  twice.append(one);
  const auto pts = m.embed(twice);
  ASSERT_EQ(pts.size(), 2u);
  EXPECT_EQ(pts[0].vector.size(), 1024u);
  EXPECT_EQ(pts[0].vector, pts[1].vector);
  EXPECT_EQ(m.embed(one)[0].vector, pts[0].vector);
}

TEST(LatentAutoencoder, SyntheticTrainingDataRejected) {
  auto data = pattern_family(10, 1);
  data.append(pattern_family(2, 3, Origin::vae));
  EXPECT_THROW(fit_latent_autoencoder<float>(data, small_ae()), DataError);
}

TEST(LatentAutoencoder, EmbedCarriesOriginAndLabel) {
  auto cfg = small_ae();
  cfg.epochs = 1;
  auto m = fit_latent_autoencoder<float>(pattern_family(8, 1), cfg);
  const auto pts = m.embed(pattern_family(3, 4, Origin::wgan));
  EXPECT_EQ(pts[1].origin, Origin::wgan);
  EXPECT_EQ(pts[1].label, eeg::Label::sch);
  EXPECT_EQ(pts[2].label, eeg::Label::norm);
}

TEST(MeanImageMse, HandExample) {
  ImageSet fit, eval;
  const float a[2] = {0, 1}, b[2] = {1, 1}, c[2] = {0, 0};
  fit.push(a, 1, 2, {}, eeg::Label::norm);
  fit.push(b, 1, 2, {}, eeg::Label::norm);
  eval.push(c, 1, 2, {}, eeg::Label::norm);
  // mean image (0.5, 1); errors 0.25 and 1 over two pixels
  EXPECT_DOUBLE_EQ(mean_image_mse(fit, eval), 0.625);
}

TEST(Tsne, ConditionalEntropyMatchesLogPerplexity) {
  const auto x = gaussian_rows(60, 20, 0, 4);
  const auto r = tsne_embed(x, quick_tsne(10, 20));
  ASSERT_EQ(r.row_entropy.size(), 60u);
  for (double h : r.row_entropy) EXPECT_NEAR(h, std::log(10.0), 1e-4);
  EXPECT_EQ(r.uncalibrated_rows, 0u);
}

TEST(Tsne, LargeDistancesStillCalibrate) {
  const auto x = gaussian_rows(40, 1024, 0, 5) * 30.0;
  const auto r = tsne_embed(x, quick_tsne(5, 10));
  for (double h : r.row_entropy) EXPECT_NEAR(h, std::log(5.0), 1e-4);
}

TEST(Tsne, SeparatedClustersStaySeparated) {
  Eigen::MatrixXd x(200, 1024);
  x << gaussian_rows(100, 1024, 0, 1), gaussian_rows(100, 1024, 10, 2);
  TsneConfig cfg;
  cfg.seed = 3;
  const auto r = tsne_embed(x, cfg);
  std::vector<int> g(200);
  for (int i = 0; i < 200; ++i) g[i] = i < 100 ? 0 : 1;
  EXPECT_GT(silhouette_score(r.coords, g), 0.5);
}

TEST(Tsne, KlDecreasesAndStaysFinite) {
  const auto x = gaussian_rows(80, 10, 0, 6);
  const auto r = tsne_embed(x, quick_tsne(8));
  ASSERT_GE(r.kl_history.size(), 2u);
  EXPECT_EQ(r.kl_history.front().iteration, 0);
  EXPECT_EQ(r.kl_history.back().iteration, 300);
  for (const auto& k : r.kl_history) EXPECT_TRUE(std::isfinite(k.kl));
  EXPECT_LT(r.kl_history.back().kl, r.kl_history.front().kl);
}

TEST(Tsne, SeedDeterministicAndCentered) {
  const auto x = gaussian_rows(30, 5, 0, 7);
  const auto a = tsne_embed(x, quick_tsne(5, 50));
  const auto b = tsne_embed(x, quick_tsne(5, 50));
  auto other = quick_tsne(5, 50);
  other.seed = 12;
  const auto c = tsne_embed(x, other);
  EXPECT_EQ(a.coords, b.coords);
  EXPECT_NE(a.coords, c.coords);
  EXPECT_EQ(a.coords.cols(), 3);
  for (int d = 0; d < 3; ++d) EXPECT_NEAR(a.coords.col(d).mean(), 0.0, 1e-9);
}

TEST(Tsne, EquidistantSimplexGivesFiniteResult) {
  const Eigen::MatrixXd x = Eigen::MatrixXd::Identity(10, 10);
  const auto r = tsne_embed(x, quick_tsne(2, 100));
  EXPECT_TRUE(r.coords.allFinite());
  for (const auto& k : r.kl_history) EXPECT_TRUE(std::isfinite(k.kl));
  EXPECT_EQ(r.uncalibrated_rows, 10u);
}

TEST(Tsne, DuplicateHeavyInputNamesRows) {
  Eigen::MatrixXd x(30, 4);
  x.topRows(20).setConstant(1.0);
  x.bottomRows(10) = gaussian_rows(10, 4, 0, 8);
  try {
    tsne_embed(x, quick_tsne(3, 10));
    FAIL() << "expected PerplexityCalibrationError";
  } catch (const PerplexityCalibrationError& e) {
    ASSERT_EQ(e.rows().size(), 20u);
    EXPECT_EQ(e.rows().front(), 0u);
    EXPECT_EQ(e.rows().back(), 19u);
    EXPECT_NE(std::string(e.what()).find("0, 1, 2"), std::string::npos);
  }
}

TEST(Tsne, AFewDuplicatesAreTolerated) {
  Eigen::MatrixXd x = gaussian_rows(40, 4, 0, 9);
  x.row(1) = x.row(0);
  EXPECT_NO_THROW(tsne_embed(x, quick_tsne(5, 10)));
}

TEST(Tsne, PreconditionsEnforced) {
  EXPECT_THROW(tsne_embed(gaussian_rows(9, 3, 0, 1), quick_tsne(2, 10)), DataError);
  EXPECT_THROW(tsne_embed(gaussian_rows(31, 3, 0, 1), quick_tsne(10, 10)), ConfigError);
  auto two_d = quick_tsne(2, 10);
  two_d.output_dim = 2;
  EXPECT_THROW(tsne_embed(gaussian_rows(20, 3, 0, 1), two_d), ConfigError);
}

TEST(Tsne, LatentPointsMustBe1024) {
  std::vector<LatentPoint> pts(12);
  for (auto& p : pts) p.vector.assign(16, 0.0f);
  EXPECT_THROW(tsne_embed(pts, quick_tsne(2, 10)), DimensionError);
}

TEST(Silhouette, HandExample) {
  Eigen::MatrixXd y(4, 3);
  y << 0, 0, 0, 1, 0, 0, 10, 0, 0, 11, 0, 0;
  const double expected = (9.5 / 10.5 + 8.5 / 9.5) / 2;
  EXPECT_NEAR(silhouette_score(y, {0, 0, 1, 1}), expected, 1e-12);
}

TEST(KnnOverlap, MixedVersusSeparated) {
  Rng rng(1);
  Eigen::MatrixXd y(60, 3);
  std::vector<Origin> o(60);
  for (int i = 0; i < 60; ++i) {
    o[i] = i < 20 ? Origin::real : i < 40 ? Origin::vae : Origin::wgan;
    const double shift = o[i] == Origin::wgan ? 50.0 : 0.0;
    for (int c = 0; c < 3; ++c) y(i, c) = rng.normal() + shift;
  }
  EXPECT_GT(knn_overlap(y, o, Origin::vae, Origin::real, 5), 0.3);
  EXPECT_EQ(knn_overlap(y, o, Origin::wgan, Origin::real, 5), 0.0);
}

TEST(EmbeddingCsv, Layout) {
  sdx::testing::TempDir dir;
  std::vector<LatentPoint> pts(2);
  pts[1].origin = Origin::vae;
  pts[1].label = eeg::Label::sch;
  Eigen::MatrixXd y(2, 3);
  y << 1, 2, 3, 4, 5, 6;
  write_embedding_csv(dir.file("e.csv"), y, pts);
  std::ifstream f(dir.file("e.csv"));
  std::stringstream ss;
  ss << f.rdbuf();
  EXPECT_EQ(ss.str(), "x,y,z,origin,label\n1,2,3,real,norm\n4,5,6,vae,sch\n");
}

TEST(Protocol, DefaultsFollowReferenceSchedule) {
  ProtocolConfig p;
  EXPECT_EQ(p.per_class, 600);
  EXPECT_DOUBLE_EQ(p.train.optimizer.learning_rate, 1e-5);
  EXPECT_EQ(p.train.epochs, 300);
}

TEST(Protocol, EmptySyntheticSetRejected) {
  EXPECT_THROW(train_on_synthetic("vae", ImageSet{}, separable_toy(8, 1), quick_protocol()), DataError);
}

TEST(Protocol, ContaminatedTestSetRejected) {
  auto test = separable_toy(8, 1);
  test.append(separable_toy(2, 2, Origin::wgan));
  EXPECT_THROW(train_on_synthetic("vae", separable_toy(8, 3, Origin::vae), test, quick_protocol()), DataError);
}

TEST(Protocol, RealItemsInSyntheticSetRejected) {
  EXPECT_THROW(train_on_synthetic("vae", separable_toy(8, 3), separable_toy(8, 1), quick_protocol()), DataError);
}

TEST(Protocol, MemorizingGeneratorStillBeatsChanceOnSeparableToy) {
  const auto source = separable_toy(2, 21, Origin::vae);
  ImageSet synthetic;
  for (int k = 0; k < 600; ++k) synthetic.append(source);
  const auto r = train_on_synthetic("memorizer", synthetic, separable_toy(64, 22), quick_protocol());
  EXPECT_EQ(r.train_size, 1200u);
  EXPECT_EQ(r.test_size, 64u);
  EXPECT_GT(r.accuracy, 0.5);
}

TEST(Protocol, RunsForBothGeneratorFamilies) {
  generative::GenArchs archs;
  archs.vae.input_height = 8;
  archs.vae.input_width = 4;
  archs.vae.encoder_filters = {2, 3};
  archs.vae.kernel = 3;
  archs.vae.encoder_dense = {5};
  archs.vae.latent = 3;
  archs.vae.decoder_dense = {4};
  archs.vae.decoder_filters = {2};
  archs.wgan.noise_dim = 4;
  archs.wgan.seed_shape = {2, 1, 4};
  archs.wgan.generator_filters = {3};
  archs.wgan.critic_filters = {2, 3};
  archs.wgan.critic_kernel = 3;
  generative::GenSchedule sched;
  sched.epochs = 1;
  sched.batch_size = 4;
  auto native = [](eeg::Label l) {
    Rng rng(static_cast<std::uint64_t>(l) + 1);
    ImageSet s;
    std::vector<float> img(32);
    for (int i = 0; i < 8; ++i) {
      for (auto& v : img) v = static_cast<float>(rng.uniform());
      s.push(img.data(), 8, 4, {"n" + std::to_string(i), 0, Origin::real}, l);
    }
    return s;
  };
  auto fit = [&](generative::GenKind k) {
    ClassCheckpoints c;
    c.norm = generative::train_generative(k, eeg::Label::norm, native(eeg::Label::norm), sched, archs).checkpoint;
    c.sch = generative::train_generative(k, eeg::Label::sch, native(eeg::Label::sch), sched, archs).checkpoint;
    return c;
  };
  const auto vae = fit(generative::GenKind::vae);
  const auto wgan = fit(generative::GenKind::wgan);
  const auto synth = synthetic_training_set(vae, 7, 1);
  EXPECT_EQ(synth.count(eeg::Label::norm), 7u);
  EXPECT_EQ(synth.count(eeg::Label::sch), 7u);
  const auto out = train_on_synthetic_protocol(vae, wgan, separable_toy(16, 3), quick_protocol());
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].model, "vae");
  EXPECT_EQ(out[1].model, "wgan");
  for (const auto& o : out) {
    EXPECT_EQ(o.train_size, 40u);
    EXPECT_TRUE(std::isfinite(o.loss));
    EXPECT_GE(o.accuracy, 0.0);
    EXPECT_LE(o.accuracy, 1.0);
  }
}
