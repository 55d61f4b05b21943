#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "sdx/autodiff.hpp"
#include "sdx/spectral/image_set.hpp"

namespace sdx::classifier {

using spectral::ImageSet;

// Conv blocks (conv kxk "same" + relu + 2x2 max-pool) followed by one hidden
// dense layer and a 2-logit head.
struct CnnArch {
  std::vector<std::int64_t> conv_filters = {32, 64, 128, 128};
  std::int64_t kernel = 3;
  std::int64_t dense_units = 128;
  std::int64_t input_height = 128;
  std::int64_t input_width = 128;

  nlohmann::json to_json() const {
    return {{"conv_filters", conv_filters}, {"kernel", kernel}, {"dense_units", dense_units},
            {"input_height", input_height}, {"input_width", input_width}};
  }
  static CnnArch from_json(const nlohmann::json& j) {
    CnnArch a;
    a.conv_filters = j.value("conv_filters", a.conv_filters);
    a.kernel = j.value("kernel", a.kernel);
    a.dense_units = j.value("dense_units", a.dense_units);
    a.input_height = j.value("input_height", a.input_height);
    a.input_width = j.value("input_width", a.input_width);
    return a;
  }
};

inline std::vector<LayerSpec> cnn_layers(const CnnArch& a) {
  std::vector<LayerSpec> l;
  for (auto f : a.conv_filters) {
    l.push_back(LayerSpec::conv(f, a.kernel, 1));
    l.push_back(LayerSpec::act(ActivationKind::relu));
    l.push_back(LayerSpec::max_pool(2));
  }
  l.push_back(LayerSpec::flatten());
  l.push_back(LayerSpec::dense(a.dense_units));
  l.push_back(LayerSpec::act(ActivationKind::relu));
  l.push_back(LayerSpec::dense(2));
  return l;
}

template <class T = float>
struct CnnClassifier {
  Sequential<T> net;
  CnnArch arch;
  std::uint64_t seed = 0;

  std::int64_t parameter_count() const { return net.parameter_count(); }
  static constexpr const char* class_names[2] = {"norm", "sch"};
};

template <class T = float>
CnnClassifier<T> build_proposed_cnn(std::uint64_t seed, const CnnArch& arch = {}) {
  CnnClassifier<T> m;
  m.arch = arch;
  m.seed = seed;
  m.net = Sequential<T>(cnn_layers(arch), Shape{arch.input_height, arch.input_width, 1}, seed);
  return m;
}

struct TrainConfig {
  AdamConfig optimizer;
  int batch_size = 32;
  int epochs = 100;
  std::uint64_t seed = 0;
  // Early stop once train accuracy is 1 and loss improved by less than
  // `converge_tol` over the last `converge_window` epochs.
  bool stop_on_convergence = false;
  int converge_window = 10;
  double converge_tol = 1e-4;

  void validate() const {
    optimizer.validate();
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (converge_window < 1) throw ConfigError("converge_window must be >= 1");
  }
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0, train_acc = 0;
  std::optional<double> test_loss, test_acc;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  bool converged = false;

  const EpochRecord& last() const { return epochs.back(); }

  std::string to_csv() const {
    std::string out = "epoch,train_loss,train_acc,test_loss,test_acc\n";
    char buf[160];
    for (const auto& e : epochs) {
      std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,", e.epoch, e.train_loss, e.train_acc);
      out += buf;
      if (e.test_loss) {
        std::snprintf(buf, sizeof buf, "%.9g,%.9g", *e.test_loss, *e.test_acc);
        out += buf;
      } else {
        out += ",";
      }
      out += "\n";
    }
    return out;
  }

  void write_csv(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw DataError("cannot open '" + path + "' for writing");
    f << to_csv();
  }
};

struct Evaluation {
  double loss = 0;
  double accuracy = 0;
  std::vector<int> predicted;
  std::vector<double> positive_scores;  // P(sch)
};

namespace detail {

inline std::vector<int> labels_of(const ImageSet& set, const std::vector<std::size_t>& idx) {
  std::vector<int> y;
  y.reserve(idx.size());
  for (auto i : idx) y.push_back(static_cast<int>(set.labels[i]));
  return y;
}

template <class T>
void require_input(const CnnClassifier<T>& m, const ImageSet& set) {
  if (set.height != m.arch.input_height || set.width != m.arch.input_width)
    throw DimensionError("classifier expects " + std::to_string(m.arch.input_height) + "x" +
                         std::to_string(m.arch.input_width) + " inputs, got " + std::to_string(set.height) + "x" +
                         std::to_string(set.width));
}

}  // namespace detail

// Row-wise softmax of eval-mode logits, [N, 2].
template <class T>
Tensor<T> predict_proba(CnnClassifier<T>& m, const Tensor<T>& batch) {
  NoGrad ng;
  const auto logits = m.net.forward(Var<T>::constant(batch), {Mode::eval}).value();
  Tensor<T> p(logits.shape());
  const auto n = logits.dim(0), c = logits.dim(1);
  for (std::int64_t i = 0; i < n; ++i) {
    T mx = logits[i * c];
    for (std::int64_t j = 1; j < c; ++j) mx = std::max(mx, logits[i * c + j]);
    T s = 0;
    for (std::int64_t j = 0; j < c; ++j) s += (p[i * c + j] = std::exp(logits[i * c + j] - mx));
    for (std::int64_t j = 0; j < c; ++j) p[i * c + j] /= s;
  }
  return p;
}

template <class T>
Evaluation evaluate(CnnClassifier<T>& m, const ImageSet& set, int batch_size = 32) {
  detail::require_input(m, set);
  Evaluation ev;
  if (set.empty()) return ev;
  NoGrad ng;
  double loss = 0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < set.size(); start += static_cast<std::size_t>(batch_size)) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(set.size(), start + batch_size); ++i) idx.push_back(i);
    const auto y = detail::labels_of(set, idx);
    const auto logits = m.net.forward(Var<T>::constant(set.batch<T>(idx)), {Mode::eval});
    loss += static_cast<double>(softmax_cross_entropy(logits, y).value().item()) * static_cast<double>(idx.size());
    const auto& z = logits.value();
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const double a = z[2 * k], b = z[2 * k + 1];
      const int pred = b > a ? 1 : 0;
      ev.predicted.push_back(pred);
      ev.positive_scores.push_back(1.0 / (1.0 + std::exp(a - b)));
      if (pred == y[k]) ++correct;
    }
  }
  ev.loss = loss / static_cast<double>(set.size());
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(set.size());
  return ev;
}

template <class T>
std::vector<double> predict_scores(CnnClassifier<T>& m, const ImageSet& set, int batch_size = 32) {
  return evaluate(m, set, batch_size).positive_scores;
}

// Mini-batch Adam on softmax cross-entropy. The per-epoch shuffle comes from
// cfg.seed alone, so a run is reproducible.
template <class T>
TrainHistory train_classifier(CnnClassifier<T>& m, const ImageSet& train, const ImageSet* test, const TrainConfig& cfg,
                              const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  cfg.validate();
  detail::require_input(m, train);
  if (test) detail::require_input(m, *test);
  if (train.empty()) throw DataError("training set is empty");
  if (train.count(eeg::Label::norm) == 0 || train.count(eeg::Label::sch) == 0)
    throw DataError("training set holds a single class (norm=" + std::to_string(train.count(eeg::Label::norm)) +
                    ", sch=" + std::to_string(train.count(eeg::Label::sch)) + ")");
  Rng rng(cfg.seed);
  Rng dropout_rng = rng.fork(1);
  const auto params = m.net.parameters();
  TrainHistory hist;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double loss_sum = 0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::vector<std::size_t> idx(order.begin() + static_cast<long>(start),
                                         order.begin() + static_cast<long>(std::min(order.size(), start + cfg.batch_size)));
      const auto y = detail::labels_of(train, idx);
      const auto logits = m.net.forward(Var<T>::constant(train.batch<T>(idx)), {Mode::train, &dropout_rng});
      auto loss = softmax_cross_entropy(logits, y);
      const auto& z = logits.value();
      for (std::size_t k = 0; k < idx.size(); ++k)
        if ((z[2 * k + 1] > z[2 * k] ? 1 : 0) == y[k]) ++correct;
      const double lv = static_cast<double>(loss.value().item());
      if (!std::isfinite(lv)) throw NumericalError("classifier loss became non-finite at epoch " + std::to_string(epoch));
      loss_sum += lv * static_cast<double>(idx.size());
      backward(loss);
      adam_step(params, cfg.optimizer);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(train.size());
    rec.train_acc = static_cast<double>(correct) / static_cast<double>(train.size());
    if (test && !test->empty()) {
      const auto ev = evaluate(m, *test, cfg.batch_size);
      rec.test_loss = ev.loss;
      rec.test_acc = ev.accuracy;
    }
    hist.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (cfg.stop_on_convergence && rec.train_acc >= 1.0 &&
        static_cast<int>(hist.epochs.size()) > cfg.converge_window) {
      const auto& past = hist.epochs[hist.epochs.size() - 1 - cfg.converge_window];
      if (past.train_loss - rec.train_loss < cfg.converge_tol) {
        hist.converged = true;
        break;
      }
    }
  }
  return hist;
}

template <class T>
ModelCheckpoint classifier_checkpoint(const CnnClassifier<T>& m, const nlohmann::json& meta = {}) {
  ModelCheckpoint ck;
  ck.arch = "cnn";
  ck.seed = m.seed;
  ck.meta = {{"arch", m.arch.to_json()}, {"layers", m.net.descriptor()}, {"info", meta.is_null() ? nlohmann::json::object() : meta}};
  append_state(ck, m.net, "cnn");
  return ck;
}

template <class T = float>
CnnClassifier<T> classifier_from_checkpoint(const ModelCheckpoint& ck) {
  if (ck.arch != "cnn") throw CheckpointFormatError("checkpoint holds a '" + ck.arch + "' model, not a classifier");
  auto m = build_proposed_cnn<T>(ck.seed, CnnArch::from_json(ck.meta.at("arch")));
  restore_state(ck, m.net, "cnn");
  return m;
}

}  // namespace sdx::classifier
