#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sdx/core/error.hpp"

namespace sdx::metrics {

// Positive class is sch (label 1).
struct ConfusionCounts {
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
  std::size_t total() const { return tp + tn + fp + fn; }
};

struct ScalarMetrics {
  std::optional<double> accuracy, sensitivity, specificity, f1;
};

struct RocPoint {
  double fpr = 0, tpr = 0;
  double threshold = 0;  // items with score >= threshold are called positive
};

struct RocCurve {
  std::vector<RocPoint> points;
  double auc = 0;
};

struct MetricsReport {
  ConfusionCounts counts;
  ScalarMetrics scalars;
  std::optional<RocCurve> roc;
};

inline ConfusionCounts confusion_counts(const std::vector<int>& truth, const std::vector<int>& predicted) {
  if (truth.size() != predicted.size())
    throw DimensionError("confusion_counts: " + std::to_string(truth.size()) + " labels vs " +
                         std::to_string(predicted.size()) + " predictions");
  ConfusionCounts c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if ((truth[i] != 0 && truth[i] != 1) || (predicted[i] != 0 && predicted[i] != 1))
      throw DataError("confusion_counts: labels must be 0 or 1 (item " + std::to_string(i) + ")");
    if (truth[i] == 1) (predicted[i] == 1 ? c.tp : c.fn)++;
    else (predicted[i] == 1 ? c.fp : c.tn)++;
  }
  return c;
}

namespace detail {
inline std::optional<double> ratio(double num, double den) {
  if (den == 0) return std::nullopt;
  return num / den;
}
}  // namespace detail

inline ScalarMetrics confusion_metrics(const ConfusionCounts& c) {
  const auto tp = static_cast<double>(c.tp), tn = static_cast<double>(c.tn);
  const auto fp = static_cast<double>(c.fp), fn = static_cast<double>(c.fn);
  ScalarMetrics m;
  m.accuracy = detail::ratio(tp + tn, tp + tn + fp + fn);
  m.sensitivity = detail::ratio(tp, tp + fn);
  m.specificity = detail::ratio(tn, tn + fp);
  m.f1 = detail::ratio(tp, tp + 0.5 * (fp + fn));
  return m;
}

// Threshold sweep over the distinct scores, highest first; tied scores move
// together. AUC by the trapezoidal rule.
inline RocCurve roc_auc(const std::vector<double>& scores, const std::vector<int>& truth) {
  if (scores.size() != truth.size())
    throw DimensionError("roc_auc: " + std::to_string(scores.size()) + " scores vs " + std::to_string(truth.size()) +
                         " labels");
  std::size_t pos = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] != 0 && truth[i] != 1) throw DataError("roc_auc: labels must be 0 or 1");
    if (!std::isfinite(scores[i])) throw DataError("roc_auc: score " + std::to_string(i) + " is not finite");
    pos += static_cast<std::size_t>(truth[i]);
  }
  const std::size_t neg = truth.size() - pos;
  if (pos == 0 || neg == 0) throw DataError("roc_auc needs both classes in the truth labels");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  RocCurve r;
  r.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::size_t tp = 0, fp = 0;
  for (std::size_t k = 0; k < order.size();) {
    const double s = scores[order[k]];
    while (k < order.size() && scores[order[k]] == s) {
      (truth[order[k]] ? tp : fp)++;
      ++k;
    }
    r.points.push_back({static_cast<double>(fp) / static_cast<double>(neg),
                        static_cast<double>(tp) / static_cast<double>(pos), s});
  }
  for (std::size_t i = 1; i < r.points.size(); ++i)
    r.auc += (r.points[i].fpr - r.points[i - 1].fpr) * 0.5 * (r.points[i].tpr + r.points[i - 1].tpr);
  r.auc = std::clamp(r.auc, 0.0, 1.0);
  return r;
}

inline MetricsReport evaluate_predictions(const std::vector<int>& truth, const std::vector<int>& predicted,
                                          const std::vector<double>& positive_scores) {
  MetricsReport r;
  r.counts = confusion_counts(truth, predicted);
  r.scalars = confusion_metrics(r.counts);
  const bool both = std::count(truth.begin(), truth.end(), 1) > 0 && std::count(truth.begin(), truth.end(), 0) > 0;
  if (both && !positive_scores.empty()) r.roc = roc_auc(positive_scores, truth);
  return r;
}

inline nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json("undefined");
}

inline nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json j = {{"tp", r.counts.tp},
                      {"tn", r.counts.tn},
                      {"fp", r.counts.fp},
                      {"fn", r.counts.fn},
                      {"accuracy", optional_json(r.scalars.accuracy)},
                      {"sensitivity", optional_json(r.scalars.sensitivity)},
                      {"specificity", optional_json(r.scalars.specificity)},
                      {"f1", optional_json(r.scalars.f1)}};
  j["auc"] = r.roc ? nlohmann::json(r.roc->auc) : nlohmann::json("undefined");
  return j;
}

inline std::string roc_csv(const RocCurve& c) {
  std::string out = "fpr,tpr,threshold\n";
  char buf[96];
  for (const auto& p : c.points) {
    if (std::isinf(p.threshold))
      std::snprintf(buf, sizeof buf, "%.9g,%.9g,inf\n", p.fpr, p.tpr);
    else
      std::snprintf(buf, sizeof buf, "%.9g,%.9g,%.9g\n", p.fpr, p.tpr, p.threshold);
    out += buf;
  }
  return out;
}

inline void write_roc_csv(const std::string& path, const RocCurve& c) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot open '" + path + "' for writing");
  f << roc_csv(c);
}

}  // namespace sdx::metrics
