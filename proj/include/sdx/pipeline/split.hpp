#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "sdx/core/hash.hpp"
#include "sdx/core/rng.hpp"
#include "sdx/spectral/image_set.hpp"

namespace sdx::pipeline {

using spectral::ImageSet;

struct SplitManifest {
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
  double fraction = 0.2;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const {
    return {{"fraction", fraction}, {"seed", seed}, {"train", train_ids}, {"test", test_ids}};
  }

  static SplitManifest from_json(const nlohmann::json& j) {
    SplitManifest m;
    m.fraction = j.at("fraction").get<double>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.train_ids = j.at("train").get<std::vector<std::string>>();
    m.test_ids = j.at("test").get<std::vector<std::string>>();
    return m;
  }

  std::string hash() const { return hex64(fnv1a64(to_json().dump())); }

  std::set<std::string> test_set() const { return {test_ids.begin(), test_ids.end()}; }
};

// Stratified by label: each class contributes round(fraction * n_class)
// randomly chosen items to the test side.
inline SplitManifest split_before_augment(const ImageSet& real, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw ConfigError("test fraction must lie in (0, 1), got " + std::to_string(fraction));
  for (std::size_t i = 0; i < real.size(); ++i)
    if (real.provenance[i].origin != spectral::Origin::real)
      throw DataError("split input contains synthetic item " + real.key(i));
  std::set<std::string> seen;
  for (std::size_t i = 0; i < real.size(); ++i)
    if (!seen.insert(real.key(i)).second) throw DataError("duplicate item id " + real.key(i));

  SplitManifest m;
  m.fraction = fraction;
  m.seed = seed;
  Rng rng(seed);
  std::vector<bool> is_test(real.size(), false);
  for (auto label : {eeg::Label::norm, eeg::Label::sch}) {
    auto idx = real.indices_of(label);
    rng.shuffle(idx.begin(), idx.end());
    const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(idx.size())));
    for (std::size_t j = 0; j < k; ++j) is_test[idx[j]] = true;
  }
  for (std::size_t i = 0; i < real.size(); ++i) (is_test[i] ? m.test_ids : m.train_ids).push_back(real.key(i));
  if (m.test_ids.empty()) throw DataError("split produced an empty test set");
  if (m.train_ids.empty()) throw DataError("split produced an empty training set");
  return m;
}

struct SplitSets {
  ImageSet train;
  ImageSet test;
};

inline SplitSets apply_split(const ImageSet& real, const SplitManifest& m) {
  std::unordered_map<std::string, std::size_t> at;
  for (std::size_t i = 0; i < real.size(); ++i) at[real.key(i)] = i;
  auto pick = [&](const std::vector<std::string>& ids) {
    std::vector<std::size_t> idx;
    idx.reserve(ids.size());
    for (const auto& id : ids) {
      const auto it = at.find(id);
      if (it == at.end()) throw DataError("split manifest names unknown item " + id);
      idx.push_back(it->second);
    }
    return real.subset(idx);
  };
  if (m.train_ids.size() + m.test_ids.size() != real.size())
    throw DataError("split manifest covers " + std::to_string(m.train_ids.size() + m.test_ids.size()) +
                    " items, dataset has " + std::to_string(real.size()));
  return {pick(m.train_ids), pick(m.test_ids)};
}

// Proof that a manifest was written to disk; augmentation requires one.
class PersistedSplit {
 public:
  const SplitManifest& manifest() const { return manifest_; }
  const std::string& path() const { return path_; }
  const std::string& hash() const { return hash_; }

  friend PersistedSplit persist_split(const SplitManifest& m, const std::string& path);
  friend PersistedSplit load_split(const std::string& path);

 private:
  PersistedSplit(SplitManifest m, std::string path)
      : manifest_(std::move(m)), path_(std::move(path)), hash_(manifest_.hash()) {}
  SplitManifest manifest_;
  std::string path_;
  std::string hash_;
};

inline PersistedSplit load_split(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("split manifest '" + path + "' not found; run the split before augmenting");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("split manifest '" + path + "' is not valid JSON: " + e.what());
  }
  return PersistedSplit(SplitManifest::from_json(j), path);
}

inline PersistedSplit persist_split(const SplitManifest& m, const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  {
    std::ofstream f(path);
    if (!f) throw DataError("cannot write split manifest '" + path + "'");
    f << m.to_json().dump(1) << '\n';
  }
  auto back = load_split(path);
  if (back.hash() != m.hash()) throw DataError("split manifest '" + path + "' did not round-trip");
  return back;
}

// Throws if any test item is synthetic or also present in `train`.
inline void check_no_leakage(const SplitManifest& m, const ImageSet& train, const ImageSet* test = nullptr) {
  const auto test_ids = m.test_set();
  for (std::size_t i = 0; i < train.size(); ++i)
    if (test_ids.count(train.key(i)))
      throw DataError("leakage: training item " + train.key(i) + " is in the test split");
  if (test) {
    for (std::size_t i = 0; i < test->size(); ++i) {
      if (test->provenance[i].origin != spectral::Origin::real)
        throw DataError("leakage: test item " + test->key(i) + " is synthetic");
      if (!test_ids.count(test->key(i))) throw DataError("test item " + test->key(i) + " is not in the split manifest");
    }
  }
}

}  // namespace sdx::pipeline
