#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "sdx/audit/autoencoder.hpp"

namespace sdx::audit {

struct TsneConfig {
  int output_dim = 3;
  double perplexity = 30.0;
  int iterations = 1000;
  double learning_rate = 200.0;
  double early_exaggeration = 12.0;
  int exaggeration_iterations = 250;
  double initial_momentum = 0.5;
  double final_momentum = 0.8;
  double min_gain = 0.01;
  double entropy_tol = 1e-5;
  int kl_every = 10;
  std::uint64_t seed = 0;

  void validate(std::size_t n) const {
    if (output_dim != 3) throw ConfigError("t-SNE output_dim must be 3, got " + std::to_string(output_dim));
    if (n < 10) throw DataError("t-SNE needs at least 10 points, got " + std::to_string(n));
    if (!(perplexity > 0)) throw ConfigError("t-SNE perplexity must be > 0");
    if (!(perplexity < (static_cast<double>(n) - 1.0) / 3.0))
      throw ConfigError("t-SNE perplexity " + std::to_string(perplexity) + " must be < (n-1)/3 = " +
                        std::to_string((static_cast<double>(n) - 1.0) / 3.0));
    if (iterations < 1) throw ConfigError("t-SNE iterations must be >= 1");
    if (!(learning_rate > 0)) throw ConfigError("t-SNE learning_rate must be > 0");
    if (early_exaggeration < 1) throw ConfigError("t-SNE early_exaggeration must be >= 1");
    if (exaggeration_iterations < 0) throw ConfigError("t-SNE exaggeration_iterations must be >= 0");
    if (kl_every < 1) throw ConfigError("t-SNE kl_every must be >= 1");
  }

  nlohmann::json to_json() const {
    return {{"output_dim", output_dim},
            {"perplexity", perplexity},
            {"iterations", iterations},
            {"learning_rate", learning_rate},
            {"early_exaggeration", early_exaggeration},
            {"exaggeration_iterations", exaggeration_iterations},
            {"seed", seed}};
  }

  static TsneConfig from_json(const nlohmann::json& j) {
    TsneConfig c;
    c.output_dim = j.value("output_dim", c.output_dim);
    c.perplexity = j.value("perplexity", c.perplexity);
    c.iterations = j.value("iterations", c.iterations);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.early_exaggeration = j.value("early_exaggeration", c.early_exaggeration);
    c.exaggeration_iterations = j.value("exaggeration_iterations", c.exaggeration_iterations);
    c.seed = j.value("seed", c.seed);
    return c;
  }
};

class PerplexityCalibrationError : public DataError {
 public:
  PerplexityCalibrationError(const std::string& msg, std::vector<std::size_t> rows)
      : DataError(msg), rows_(std::move(rows)) {}
  const std::vector<std::size_t>& rows() const { return rows_; }

 private:
  std::vector<std::size_t> rows_;
};

struct KlSample {
  int iteration = 0;
  double kl = 0;
};

struct TsneResult {
  Eigen::MatrixXd coords;            // n x 3, column means zero
  std::vector<KlSample> kl_history;  // first entry is the initial embedding
  std::vector<double> row_entropy;   // conditional entropy after calibration (nats)
  std::vector<double> row_beta;
  std::size_t uncalibrated_rows = 0;  // rows whose target entropy is unreachable without duplicates
};

namespace detail {

inline Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& x) {
  const Eigen::VectorXd sq = x.rowwise().squaredNorm();
  Eigen::MatrixXd d = (-2.0 * x * x.transpose()).colwise() + sq;
  d.rowwise() += sq.transpose();
  d = d.cwiseMax(0.0);
  d.diagonal().setZero();
  return d;
}

// Entropy (nats) of p_j proportional to exp(-beta * (d_j - dmin)), j != i.
inline double row_distribution(const Eigen::MatrixXd& d, Eigen::Index i, double beta, double dmin,
                               Eigen::VectorXd& p) {
  const auto n = d.rows();
  double z = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    p[j] = j == i ? 0.0 : std::exp(-beta * (d(i, j) - dmin));
    z += p[j];
  }
  double h = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    if (j == i) continue;
    p[j] /= z;
    if (p[j] > 0) h -= p[j] * std::log(p[j]);
  }
  return h;
}

}  // namespace detail

// Symmetric joint probabilities P from perplexity-calibrated conditionals.
inline Eigen::MatrixXd tsne_joint_probabilities(const Eigen::MatrixXd& x, const TsneConfig& cfg, TsneResult& info,
                                                const std::vector<Eigen::Index>& group) {
  const auto n = x.rows();
  auto d = detail::squared_distances(x);
  std::vector<bool> has_duplicate(static_cast<std::size_t>(n), false);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j && group[static_cast<std::size_t>(i)] == group[static_cast<std::size_t>(j)]) {
        d(i, j) = 0.0;
        has_duplicate[static_cast<std::size_t>(i)] = true;
      }
  const double target = std::log(cfg.perplexity);
  Eigen::MatrixXd cond = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd p(n);
  info.row_entropy.assign(static_cast<std::size_t>(n), 0.0);
  info.row_beta.assign(static_cast<std::size_t>(n), 0.0);
  std::vector<std::size_t> failed;
  for (Eigen::Index i = 0; i < n; ++i) {
    double dmin = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) dmin = std::min(dmin, d(i, j));
    double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
    double h = detail::row_distribution(d, i, beta, dmin, p);
    double best_gap = std::abs(h - target);
    Eigen::VectorXd best = p;
    double best_beta = beta, best_h = h;
    for (int it = 0; it < 200 && std::abs(h - target) > cfg.entropy_tol; ++it) {
      if (h > target) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
      } else {
        hi = beta;
        beta = 0.5 * (beta + lo);
      }
      h = detail::row_distribution(d, i, beta, dmin, p);
      if (std::abs(h - target) < best_gap) {
        best_gap = std::abs(h - target);
        best = p;
        best_beta = beta;
        best_h = h;
      }
    }
    if (best_gap > cfg.entropy_tol) {
      if (has_duplicate[static_cast<std::size_t>(i)])
        failed.push_back(static_cast<std::size_t>(i));
      else
        ++info.uncalibrated_rows;
    }
    cond.row(i) = best;
    info.row_entropy[static_cast<std::size_t>(i)] = best_h;
    info.row_beta[static_cast<std::size_t>(i)] = best_beta;
  }
  if (!failed.empty()) {
    std::string rows;
    for (std::size_t k = 0; k < failed.size() && k < 20; ++k) rows += (k ? ", " : "") + std::to_string(failed[k]);
    if (failed.size() > 20) rows += ", ...";
    throw PerplexityCalibrationError("perplexity " + std::to_string(cfg.perplexity) +
                                         " cannot be reached for rows with too many exact duplicates: " + rows,
                                     failed);
  }
  Eigen::MatrixXd joint = (cond + cond.transpose()) / (2.0 * static_cast<double>(n));
  joint = joint.cwiseMax(1e-12);
  joint.diagonal().setZero();
  return joint;
}

// Exact t-SNE: KL(P || Q) with Student-t Q, gradient descent with momentum
// and per-coordinate gains.
inline TsneResult tsne_embed(const Eigen::MatrixXd& x, const TsneConfig& cfg = {}) {
  const auto n = x.rows();
  cfg.validate(static_cast<std::size_t>(n));
  if (!x.allFinite()) throw DataError("t-SNE input contains non-finite values");

  std::vector<Eigen::Index> group(static_cast<std::size_t>(n));
  {
    std::map<std::vector<double>, Eigen::Index> seen;
    for (Eigen::Index i = 0; i < n; ++i) {
      std::vector<double> row(static_cast<std::size_t>(x.cols()));
      for (Eigen::Index c = 0; c < x.cols(); ++c) row[static_cast<std::size_t>(c)] = x(i, c);
      group[static_cast<std::size_t>(i)] = seen.emplace(std::move(row), i).first->second;
    }
  }

  TsneResult r;
  const Eigen::MatrixXd p = tsne_joint_probabilities(x, cfg, r, group);
  const int dims = cfg.output_dim;

  Rng rng(cfg.seed);
  Eigen::MatrixXd y(n, dims);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int c = 0; c < dims; ++c) y(i, c) = 1e-4 * rng.normal();
  Eigen::MatrixXd update = Eigen::MatrixXd::Zero(n, dims);
  Eigen::MatrixXd gains = Eigen::MatrixXd::Ones(n, dims);
  Eigen::MatrixXd num(n, n);
  Eigen::MatrixXd grad(n, dims);

  auto compute_num = [&] {
    double z = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      num(i, i) = 0;
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const double v = 1.0 / (1.0 + (y.row(i) - y.row(j)).squaredNorm());
        num(i, j) = num(j, i) = v;
        z += 2 * v;
      }
    }
    return z;
  };
  auto kl_of = [&](double z) {
    double kl = 0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) {
        if (i == j) continue;
        const double q = std::max(num(i, j) / z, 1e-12);
        kl += p(i, j) * std::log(p(i, j) / q);
      }
    return kl;
  };
  auto record = [&](int it, double z) {
    const double kl = kl_of(z);
    if (!std::isfinite(kl)) throw NumericalError("t-SNE KL became non-finite at iteration " + std::to_string(it));
    r.kl_history.push_back({it, kl});
  };

  record(0, compute_num());
  for (int it = 1; it <= cfg.iterations; ++it) {
    const bool early = it <= cfg.exaggeration_iterations;
    const double ex = early ? cfg.early_exaggeration : 1.0;
    const double momentum = early ? cfg.initial_momentum : cfg.final_momentum;
    const double z = compute_num();
    grad.setZero();
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const double m = 4.0 * (ex * p(i, j) - num(i, j) / z) * num(i, j);
        for (int c = 0; c < dims; ++c) {
          const double g = m * (y(i, c) - y(j, c));
          grad(i, c) += g;
          grad(j, c) -= g;
        }
      }
    for (Eigen::Index i = 0; i < n; ++i)
      for (int c = 0; c < dims; ++c) {
        double& g = gains(i, c);
        g = ((grad(i, c) > 0) != (update(i, c) > 0)) ? g + 0.2 : g * 0.8;
        g = std::max(g, cfg.min_gain);
        update(i, c) = momentum * update(i, c) - cfg.learning_rate * g * grad(i, c);
        y(i, c) += update(i, c);
      }
    y.rowwise() -= y.colwise().mean();
    if (!y.allFinite()) throw NumericalError("t-SNE embedding became non-finite at iteration " + std::to_string(it));
    if (it % cfg.kl_every == 0 || it == cfg.iterations) record(it, compute_num());
  }
  r.coords = y;
  return r;
}

inline Eigen::MatrixXd latent_matrix(const std::vector<LatentPoint>& points) {
  if (points.empty()) throw DataError("no latent points");
  const auto d = points.front().vector.size();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(points.size()), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].vector.size() != d)
      throw DimensionError("latent point " + std::to_string(i) + " has " + std::to_string(points[i].vector.size()) +
                           " entries, expected " + std::to_string(d));
    for (std::size_t c = 0; c < d; ++c) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = points[i].vector[c];
  }
  return x;
}

inline TsneResult tsne_embed(const std::vector<LatentPoint>& points, const TsneConfig& cfg = {}) {
  for (std::size_t i = 0; i < points.size(); ++i)
    if (static_cast<std::int64_t>(points[i].vector.size()) != kLatentDim)
      throw DimensionError("latent point " + std::to_string(i) + " has dimension " +
                           std::to_string(points[i].vector.size()) + ", expected " + std::to_string(kLatentDim));
  return tsne_embed(latent_matrix(points), cfg);
}

// Mean silhouette coefficient with Euclidean distance.
inline double silhouette_score(const Eigen::MatrixXd& y, const std::vector<int>& groups) {
  const auto n = static_cast<std::size_t>(y.rows());
  if (groups.size() != n) throw DimensionError("silhouette_score: group count does not match rows");
  std::map<int, std::size_t> sizes;
  for (int g : groups) ++sizes[g];
  if (sizes.size() < 2) throw DataError("silhouette_score needs at least two groups");
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::map<int, double> sum;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i)
        sum[groups[j]] += (y.row(static_cast<Eigen::Index>(i)) - y.row(static_cast<Eigen::Index>(j))).norm();
    const auto own = sizes[groups[i]];
    if (own < 2) continue;
    const double a = sum[groups[i]] / static_cast<double>(own - 1);
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [g, s] : sum)
      if (g != groups[i]) b = std::min(b, s / static_cast<double>(sizes[g]));
    total += (b - a) / std::max(a, b);
  }
  return total / static_cast<double>(n);
}

// Over points from `candidate`: mean fraction of the k nearest neighbours
// (among candidate and reference points, self excluded) that are reference
// points. Near the reference share when the groups mix, near 0 when apart.
inline double knn_overlap(const Eigen::MatrixXd& y, const std::vector<spectral::Origin>& origin,
                          spectral::Origin candidate, spectral::Origin reference, int k = 10) {
  std::vector<Eigen::Index> pool;
  for (std::size_t i = 0; i < origin.size(); ++i)
    if (origin[i] == candidate || origin[i] == reference) pool.push_back(static_cast<Eigen::Index>(i));
  if (static_cast<int>(pool.size()) <= k) throw DataError("knn_overlap: fewer than k+1 points");
  double total = 0;
  std::size_t count = 0;
  std::vector<std::pair<double, Eigen::Index>> dist;
  for (auto i : pool) {
    if (origin[static_cast<std::size_t>(i)] != candidate) continue;
    dist.clear();
    for (auto j : pool)
      if (j != i) dist.emplace_back((y.row(i) - y.row(j)).squaredNorm(), j);
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
    int hits = 0;
    for (int m = 0; m < k; ++m)
      if (origin[static_cast<std::size_t>(dist[static_cast<std::size_t>(m)].second)] == reference) ++hits;
    total += static_cast<double>(hits) / k;
    ++count;
  }
  if (count == 0) throw DataError("knn_overlap: no candidate points");
  return total / static_cast<double>(count);
}

inline void write_embedding_csv(const std::string& path, const Eigen::MatrixXd& y,
                                const std::vector<LatentPoint>& points) {
  if (static_cast<std::size_t>(y.rows()) != points.size()) throw DimensionError("embedding rows do not match points");
  std::ofstream f(path);
  if (!f) throw DataError("cannot open '" + path + "' for writing");
  f << "x,y,z,origin,label\n";
  f.precision(9);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    f << y(r, 0) << ',' << y(r, 1) << ',' << y(r, 2) << ',' << spectral::origin_name(points[i].origin) << ','
      << eeg::label_name(points[i].label) << '\n';
  }
}

}  // namespace sdx::audit
