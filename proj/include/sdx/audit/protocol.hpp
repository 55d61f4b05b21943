#pragma once

#include <string>
#include <vector>

#include "sdx/classifier/cnn.hpp"
#include "sdx/generative/train.hpp"

namespace sdx::audit {

using spectral::ImageSet;

struct ProtocolConfig {
  int per_class = 600;
  classifier::CnnArch arch;
  classifier::TrainConfig train = default_train();
  std::uint64_t seed = 0;

  static classifier::TrainConfig default_train() {
    classifier::TrainConfig t;
    t.optimizer.learning_rate = 1e-5;
    t.epochs = 300;
    return t;
  }

  void validate() const {
    if (per_class < 1) throw ConfigError("per_class must be >= 1");
    train.validate();
  }
};

struct ClassCheckpoints {
  ModelCheckpoint norm;
  ModelCheckpoint sch;
};

struct ProtocolOutcome {
  std::string model;  // "vae", "wgan" or caller-chosen
  double accuracy = 0;
  double loss = 0;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  classifier::TrainHistory history;
};

inline void require_real_only(const ImageSet& set, const std::string& what) {
  for (std::size_t i = 0; i < set.size(); ++i)
    if (set.provenance[i].origin != spectral::Origin::real)
      throw DataError(what + " contains synthetic item " + set.key(i));
}

inline ImageSet synthetic_training_set(const ClassCheckpoints& ck, int per_class, std::uint64_t seed) {
  Rng seeds(seed);
  auto out = generative::sample_synthetic(ck.norm, per_class, eeg::Label::norm, seeds.next_u64());
  out.append(generative::sample_synthetic(ck.sch, per_class, eeg::Label::sch, seeds.next_u64()));
  return out;
}

// Trains a fresh CNN on synthetic images only (resized to the classifier
// input) and scores it on real test images.
inline ProtocolOutcome train_on_synthetic(const std::string& model, const ImageSet& synthetic, const ImageSet& real_test,
                                          const ProtocolConfig& cfg) {
  cfg.validate();
  if (synthetic.empty()) throw DataError("synthetic training set for '" + model + "' is empty");
  if (real_test.empty()) throw DataError("real test set is empty");
  require_real_only(real_test, "real test set");
  for (std::size_t i = 0; i < synthetic.size(); ++i)
    if (synthetic.provenance[i].origin == spectral::Origin::real)
      throw DataError("synthetic training set for '" + model + "' contains real item " + synthetic.key(i));
  const auto train = spectral::resize_set(synthetic, static_cast<int>(cfg.arch.input_height),
                                          static_cast<int>(cfg.arch.input_width));
  auto m = classifier::build_proposed_cnn<float>(cfg.seed, cfg.arch);
  auto tc = cfg.train;
  tc.seed = cfg.seed;
  ProtocolOutcome out;
  out.model = model;
  out.history = classifier::train_classifier(m, train, nullptr, tc);
  const auto ev = classifier::evaluate(m, real_test, tc.batch_size);
  out.accuracy = ev.accuracy;
  out.loss = ev.loss;
  out.train_size = train.size();
  out.test_size = real_test.size();
  return out;
}

// Train-on-synthetic / test-on-real for both generator families.
inline std::vector<ProtocolOutcome> train_on_synthetic_protocol(const ClassCheckpoints& vae,
                                                                const ClassCheckpoints& wgan,
                                                                const ImageSet& real_test, const ProtocolConfig& cfg) {
  cfg.validate();
  require_real_only(real_test, "real test set");
  std::vector<ProtocolOutcome> out;
  Rng seeds(cfg.seed);
  for (const auto* entry : {&vae, &wgan}) {
    const std::string name = entry == &vae ? "vae" : "wgan";
    const auto synthetic = synthetic_training_set(*entry, cfg.per_class, seeds.next_u64());
    out.push_back(train_on_synthetic(name, synthetic, real_test, cfg));
  }
  return out;
}

}  // namespace sdx::audit
