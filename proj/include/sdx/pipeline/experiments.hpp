#pragma once

#include <cctype>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "sdx/audit/protocol.hpp"
#include "sdx/metrics/metrics.hpp"
#include "sdx/pipeline/split.hpp"

namespace sdx::pipeline {

using audit::ClassCheckpoints;

// Appends `add_norm` / `add_sch` synthetic items drawn from the per-class
// checkpoints, resized to the training images' size.
inline ImageSet augment_dataset(const ImageSet& train, const PersistedSplit& split, const ClassCheckpoints& ck,
                                std::size_t add_norm, std::size_t add_sch, std::uint64_t seed) {
  const auto& m = split.manifest();
  const std::set<std::string> train_ids(m.train_ids.begin(), m.train_ids.end());
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (train.provenance[i].origin != spectral::Origin::real)
      throw DataError("augment_dataset expects the real training split, found synthetic item " + train.key(i));
    if (!train_ids.count(train.key(i)))
      throw DataError("training item " + train.key(i) + " is not in the persisted split '" + split.path() + "'");
  }
  check_no_leakage(m, train);
  ImageSet out = train;
  Rng seeds(seed);
  auto add = [&](const ModelCheckpoint& c, std::size_t count, eeg::Label label) {
    const auto salt = seeds.next_u64();
    if (count == 0) return;
    auto synth = generative::sample_synthetic(c, static_cast<int>(count), label, salt);
    for (auto& p : synth.provenance) p.subject_id += "-" + hex64(salt).substr(0, 8);
    out.append(spectral::resize_set(synth, train.height, train.width));
  };
  add(ck.norm, add_norm, eeg::Label::norm);
  add(ck.sch, add_sch, eeg::Label::sch);
  if (out.size() != train.size() + add_norm + add_sch) throw Error(ErrorKind::internal, "augmented size mismatch");
  check_no_leakage(m, out);
  return out;
}

struct SweepConfig {
  std::vector<std::string> models = {"vae", "wgan"};
  std::vector<std::pair<std::size_t, std::size_t>> rows = {{230, 200}, {330, 300}, {430, 400},
                                                           {630, 600}, {730, 700}, {830, 800}};
  classifier::CnnArch arch;
  classifier::TrainConfig train = default_train();
  int repeats = 1;
  std::uint64_t seed = 0;

  static classifier::TrainConfig default_train() {
    classifier::TrainConfig t;
    t.optimizer.learning_rate = 1e-5;
    t.epochs = 300;
    t.stop_on_convergence = true;
    t.converge_window = 10;
    t.converge_tol = 1e-4;
    return t;
  }

  void validate() const {
    if (models.empty()) throw ConfigError("sweep needs at least one model");
    if (rows.empty()) throw ConfigError("sweep needs at least one count row");
    if (repeats < 1) throw ConfigError("sweep repeats must be >= 1");
    train.validate();
  }
};

struct SweepRow {
  std::string model;
  std::size_t add_norm = 0, add_sch = 0;
  std::size_t train_size = 0;
  double accuracy = 0;  // mean over repeats
  double loss = 0;
  std::vector<double> seed_accuracy, seed_loss;
  std::vector<std::uint64_t> seeds;
  std::vector<int> epochs_run;

  std::string row_label() const { return "+" + std::to_string(add_norm) + ", " + std::to_string(add_sch); }
};

// Highest accuracy, ties broken by lower loss.
inline std::size_t select_best_row(const std::vector<SweepRow>& rows) {
  if (rows.empty()) throw DataError("no sweep rows to select from");
  std::size_t best = 0;
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (rows[i].accuracy > rows[best].accuracy ||
        (rows[i].accuracy == rows[best].accuracy && rows[i].loss < rows[best].loss))
      best = i;
  return best;
}

struct TrainedRun {
  classifier::TrainHistory history;
  classifier::Evaluation evaluation;
};

inline TrainedRun train_and_evaluate(const ImageSet& train, const ImageSet& test, const classifier::CnnArch& arch,
                                     classifier::TrainConfig tc, std::uint64_t seed) {
  auto m = classifier::build_proposed_cnn<float>(seed, arch);
  tc.seed = seed;
  TrainedRun r;
  r.history = classifier::train_classifier(m, train, nullptr, tc);
  r.evaluation = classifier::evaluate(m, test, tc.batch_size);
  return r;
}

// Every (model, count row) cell trains a fresh CNN; cell seeds derive from
// the global seed and the cell index.
inline std::vector<SweepRow> run_sweep(const ImageSet& train, const ImageSet& test, const PersistedSplit& split,
                                       const std::map<std::string, ClassCheckpoints>& checkpoints,
                                       const SweepConfig& cfg,
                                       const std::function<void(const SweepRow&)>& on_row = {}) {
  cfg.validate();
  check_no_leakage(split.manifest(), train, &test);
  std::vector<SweepRow> out;
  std::uint64_t cell = 0;
  for (const auto& model : cfg.models) {
    const auto it = checkpoints.find(model);
    if (it == checkpoints.end()) throw ConfigError("no checkpoints supplied for sweep model '" + model + "'");
    for (const auto& [an, as] : cfg.rows) {
      SweepRow row;
      row.model = model;
      row.add_norm = an;
      row.add_sch = as;
      for (int r = 0; r < cfg.repeats; ++r, ++cell) {
        const auto seed = Rng::mix(cfg.seed + cell);
        const auto augmented = augment_dataset(train, split, it->second, an, as, seed);
        const auto run = train_and_evaluate(augmented, test, cfg.arch, cfg.train, seed);
        row.train_size = augmented.size();
        row.seeds.push_back(seed);
        row.seed_accuracy.push_back(run.evaluation.accuracy);
        row.seed_loss.push_back(run.evaluation.loss);
        row.epochs_run.push_back(static_cast<int>(run.history.epochs.size()));
      }
      for (std::size_t k = 0; k < row.seeds.size(); ++k) {
        row.accuracy += row.seed_accuracy[k] / static_cast<double>(row.seeds.size());
        row.loss += row.seed_loss[k] / static_cast<double>(row.seeds.size());
      }
      if (on_row) on_row(row);
      out.push_back(std::move(row));
    }
  }
  return out;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "model,add_norm,add_sch,train_size,accuracy,loss\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%zu,%zu,%zu,%.9g,%.9g\n", r.model.c_str(), r.add_norm, r.add_sch, r.train_size,
                  r.accuracy, r.loss);
    out += buf;
  }
  return out;
}

struct FinalConfig {
  std::string model = "vae";
  std::size_t add_norm = 730, add_sch = 700;
  classifier::CnnArch arch;
  classifier::TrainConfig train = default_train();
  std::uint64_t seed = 0;

  static classifier::TrainConfig default_train() {
    classifier::TrainConfig t;
    t.optimizer.learning_rate = 8e-5;
    t.epochs = 100;
    return t;
  }

  std::string augmented_name() const {
    std::string m = model;
    for (auto& c : m) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return m + "-" + std::to_string(add_sch);
  }
};

struct FinalRow {
  std::string name;
  std::size_t train_size = 0;
  metrics::MetricsReport metrics;
  double loss = 0;
  classifier::TrainHistory history;
};

// Augmented vs non-augmented training on the same split and seed.
inline std::vector<FinalRow> run_final_comparison(const ImageSet& train, const ImageSet& test, const PersistedSplit& split,
                                                  const ClassCheckpoints& checkpoints, const FinalConfig& cfg) {
  cfg.train.validate();
  check_no_leakage(split.manifest(), train, &test);
  std::vector<int> truth;
  for (auto l : test.labels) truth.push_back(static_cast<int>(l));
  auto row = [&](const std::string& name, const ImageSet& set) {
    const auto run = train_and_evaluate(set, test, cfg.arch, cfg.train, cfg.seed);
    FinalRow r;
    r.name = name;
    r.train_size = set.size();
    r.loss = run.evaluation.loss;
    r.history = run.history;
    r.metrics = metrics::evaluate_predictions(truth, run.evaluation.predicted, run.evaluation.positive_scores);
    return r;
  };
  std::vector<FinalRow> out;
  const auto augmented = augment_dataset(train, split, checkpoints, cfg.add_norm, cfg.add_sch, Rng::mix(cfg.seed));
  out.push_back(row(cfg.augmented_name(), augmented));
  out.push_back(row("Non-augmented", train));
  return out;
}

}  // namespace sdx::pipeline
