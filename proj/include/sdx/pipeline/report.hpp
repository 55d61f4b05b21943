#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sdx/pipeline/experiments.hpp"

namespace sdx::pipeline {

struct RunManifest {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string code_version = kCodeVersion;
  std::string split_hash;

  nlohmann::json to_json() const {
    nlohmann::json j = {{"config_hash", config_hash}, {"seed", seed}, {"code_version", code_version}};
    if (!split_hash.empty()) j["split_hash"] = split_hash;
    return j;
  }
};

// Machine check run before any report is written: no training set shares an
// id with the test split, and the test set is all real.
inline nlohmann::json leakage_section(const SplitManifest& m, const std::vector<const ImageSet*>& train_sets,
                                      const ImageSet& test) {
  std::size_t synthetic = 0;
  for (const auto* t : train_sets) {
    check_no_leakage(m, *t, &test);
    for (const auto& p : t->provenance) synthetic += p.origin != spectral::Origin::real;
  }
  return {{"passed", true},
          {"test_items", test.size()},
          {"train_sets_checked", train_sets.size()},
          {"synthetic_train_items", synthetic}};
}

inline nlohmann::json optional_metric(const std::optional<double>& v) { return metrics::optional_json(v); }

inline nlohmann::json sweep_json(const std::vector<SweepRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows)
    out.push_back({{"model", r.model},
                   {"add_norm", r.add_norm},
                   {"add_sch", r.add_sch},
                   {"row", r.row_label()},
                   {"train_size", r.train_size},
                   {"accuracy", r.accuracy},
                   {"loss", r.loss},
                   {"seeds", r.seeds},
                   {"seed_accuracy", r.seed_accuracy},
                   {"seed_loss", r.seed_loss},
                   {"epochs_run", r.epochs_run}});
  nlohmann::json j = {{"rows", out}};
  if (!rows.empty()) {
    const auto& b = rows[select_best_row(rows)];
    j["best"] = {{"model", b.model}, {"row", b.row_label()}, {"accuracy", b.accuracy}, {"loss", b.loss}};
  }
  return j;
}

inline nlohmann::json final_json(const std::vector<FinalRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    const auto& s = r.metrics.scalars;
    out.push_back({{"name", r.name},
                   {"train_size", r.train_size},
                   {"loss", r.loss},
                   {"accuracy", optional_metric(s.accuracy)},
                   {"f1", optional_metric(s.f1)},
                   {"sensitivity", optional_metric(s.sensitivity)},
                   {"specificity", optional_metric(s.specificity)},
                   {"auc", r.metrics.roc ? nlohmann::json(r.metrics.roc->auc) : nlohmann::json("undefined")},
                   {"tp", r.metrics.counts.tp},
                   {"tn", r.metrics.counts.tn},
                   {"fp", r.metrics.counts.fp},
                   {"fn", r.metrics.counts.fn},
                   {"epochs_run", r.history.epochs.size()}});
  }
  return {{"rows", out}};
}

inline nlohmann::json protocol_json(const std::vector<audit::ProtocolOutcome>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows)
    out.push_back({{"model", r.model},
                   {"accuracy", r.accuracy},
                   {"loss", r.loss},
                   {"train_size", r.train_size},
                   {"test_size", r.test_size}});
  return {{"rows", out}};
}

inline nlohmann::json make_report(const std::string& kind, const RunManifest& manifest, nlohmann::json leakage,
                                  nlohmann::json body) {
  nlohmann::json j = {{"kind", kind}, {"manifest", manifest.to_json()}, {"leakage_check", std::move(leakage)}};
  for (auto it = body.begin(); it != body.end(); ++it) j[it.key()] = it.value();
  return j;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw DataError("cannot write '" + path.string() + "'");
  f << j.dump(2) << '\n';
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw DataError("cannot write '" + path.string() + "'");
  f << text;
}

}  // namespace sdx::pipeline
