/*
 * Copyright 2026 The specdapt Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Evaluation and diagnostic metrics for probabilistic isotope classifiers.

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "specdapt/autodiff.hpp"
#include "specdapt/core.hpp"
#include "specdapt/models.hpp"
#include "specdapt/spectra.hpp"

namespace specdapt::metrics {

// Floor applied to probabilities before any logarithm.
inline constexpr double kProbFloor = 1e-12;

namespace detail {

inline void check_same_shape(const Matrix& a, const Matrix& b) {
  require(a.size() == b.size(), "row count mismatch");
  for (std::size_t i = 0; i < a.size(); ++i)
    require(a[i].size() == b[i].size(), "column count mismatch");
}

inline void check_simplex(const Matrix& m, double tol, const char* what) {
  for (const auto& row : m) {
    double s = 0.0;
    for (double v : row) {
      require(v >= -tol, std::string(what) + " has a negative entry");
      s += v;
    }
    require(std::abs(s - 1.0) <= tol, std::string(what) + " row is off the simplex");
  }
}

inline std::size_t argmax(std::span<const double> row) {
  // First maximum wins, so ties go to the lowest class index.
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

}  // namespace detail

// 1 - (1/2N) sum_i sum_j |pred_ij - true_ij|.
inline double ape_score(const Matrix& y_pred, const Matrix& y_true) {
  detail::check_same_shape(y_pred, y_true);
  require(!y_pred.empty(), "ape_score needs at least one row");
  detail::check_simplex(y_pred, 1e-6, "y_pred");
  detail::check_simplex(y_true, 1e-6, "y_true");
  double total = 0.0;
  for (std::size_t i = 0; i < y_pred.size(); ++i)
    for (std::size_t j = 0; j < y_pred[i].size(); ++j) total += std::abs(y_pred[i][j] - y_true[i][j]);
  const double score = 1.0 - total / (2.0 * static_cast<double>(y_pred.size()));
  return std::clamp(score, 0.0, 1.0);
}

// Class indices of one-hot label rows; soft rows are rejected.
inline std::vector<std::size_t> hard_labels(const Matrix& labels) {
  std::vector<std::size_t> out;
  out.reserve(labels.size());
  for (const auto& row : labels) {
    std::size_t hot = row.size();
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (row[j] == 1.0 && hot == row.size()) {
        hot = j;
      } else if (row[j] != 0.0) {
        throw ValidationError("labels are not one-hot");
      }
    }
    require(hot < row.size(), "labels are not one-hot");
    out.push_back(hot);
  }
  return out;
}

struct PredictionSet {
  Matrix probs;
  Matrix logits;
  Matrix labels;
  std::vector<std::size_t> hard_true;  // empty for proportion labels

  static PredictionSet from(models::Outputs out, Matrix labels) {
    PredictionSet p;
    p.probs = std::move(out.probs);
    p.logits = std::move(out.logits);
    p.labels = std::move(labels);
    detail::check_same_shape(p.probs, p.labels);
    detail::check_simplex(p.probs, 1e-6, "probs");
    try {
      p.hard_true = hard_labels(p.labels);
    } catch (const ValidationError&) {
      p.hard_true.clear();
    }
    return p;
  }

  std::size_t size() const { return probs.size(); }
  bool one_hot() const { return !probs.empty() && hard_true.size() == probs.size(); }
  void require_one_hot(const char* metric) const {
    require(one_hot(), std::string(metric) + " needs one-hot labels");
  }
};

inline double accuracy(const PredictionSet& p) {
  p.require_one_hot("accuracy");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (detail::argmax(p.probs[i]) == p.hard_true[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(p.size());
}

struct Calibration {
  double nll = 0.0;
  double brier = 0.0;
  double ece = 0.0;
};

// NLL with a 1e-12 probability floor, multi-class Brier score, and ECE over
// equal-width confidence bins on [0, 1] (confidence 1.0 falls in the last bin).
inline Calibration calibration_suite(const PredictionSet& p, std::size_t n_ece_bins = 15) {
  p.require_one_hot("calibration_suite");
  require(n_ece_bins >= 1, "ECE needs at least one bin");
  const double n = static_cast<double>(p.size());
  Calibration c;
  std::vector<double> bin_conf(n_ece_bins, 0.0), bin_acc(n_ece_bins, 0.0);
  std::vector<std::size_t> bin_count(n_ece_bins, 0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto& row = p.probs[i];
    const std::size_t y = p.hard_true[i];
    c.nll -= std::log(std::max(row[y], kProbFloor));
    for (std::size_t j = 0; j < row.size(); ++j) {
      const double d = row[j] - (j == y ? 1.0 : 0.0);
      c.brier += d * d;
    }
    const std::size_t top = detail::argmax(row);
    const double conf = row[top];
    auto b = static_cast<std::size_t>(std::floor(conf * static_cast<double>(n_ece_bins)));
    b = std::min(b, n_ece_bins - 1);
    bin_conf[b] += conf;
    bin_acc[b] += top == y ? 1.0 : 0.0;
    ++bin_count[b];
  }
  c.nll /= n;
  c.brier /= n;
  for (std::size_t b = 0; b < n_ece_bins; ++b) {
    if (bin_count[b] == 0) continue;
    const double cnt = static_cast<double>(bin_count[b]);
    c.ece += (cnt / n) * std::abs(bin_acc[b] / cnt - bin_conf[b] / cnt);
  }
  return c;
}

// Linear interpolation between order statistics at rank q*(n-1).
inline double percentile(std::vector<double> values, double q) {
  require(!values.empty(), "percentile of an empty sample");
  require(q >= 0.0 && q <= 1.0, "percentile fraction must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

enum class MarginSpace { kLogit, kProb };

struct Margins {
  double mean = 0.0;
  double p10 = 0.0;
};

// Per-sample gap between the top two scores, negated when the top class is
// not the true class.
inline std::vector<double> sample_margins(const PredictionSet& p, MarginSpace space) {
  p.require_one_hot("margins");
  std::vector<double> out;
  out.reserve(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto& row = space == MarginSpace::kLogit ? p.logits.at(i) : p.probs[i];
    require(row.size() >= 2, "margins need at least two classes");
    const std::size_t top = detail::argmax(row);
    double second = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < row.size(); ++j)
      if (j != top) second = std::max(second, row[j]);
    const double gap = row[top] - second;
    out.push_back(top == p.hard_true[i] ? gap : -gap);
  }
  return out;
}

inline Margins margins(const PredictionSet& p, MarginSpace space = MarginSpace::kLogit) {
  std::vector<double> m = sample_margins(p, space);
  Margins r;
  r.mean = std::accumulate(m.begin(), m.end(), 0.0) / static_cast<double>(m.size());
  r.p10 = percentile(std::move(m), 0.10);
  return r;
}

// Mean Shannon entropy in nats, with 0 ln 0 = 0.
inline double entropy_mean(const Matrix& probs) {
  require(!probs.empty(), "entropy of an empty prediction set");
  double total = 0.0;
  for (const auto& row : probs)
    for (double v : row)
      if (v > 0.0) total -= v * std::log(v);
  return total / static_cast<double>(probs.size());
}

// Mean over samples of ||d loss_i / d x_i||^2, where x_i is the zscored input
// and loss_i the soft-label cross entropy of sample i.
inline double jacobian_norm_mean(models::ModelBundle& model, const Matrix& zscored,
                                 const Matrix& labels, std::size_t chunk = 64) {
  require(zscored.size() == labels.size() && !zscored.empty(),
          "jacobian_norm_mean needs matching, nonempty inputs and labels");
  const std::size_t n_bins = model.spec.n_bins, M = model.spec.n_classes;
  // Parameter gradients are not needed; freeze temporarily.
  std::vector<bool> saved;
  for (auto& prm : model.params.all()) {
    saved.push_back(prm.trainable);
    prm.trainable = false;
  }
  double total = 0.0;
  Rng unused(0);
  try {
    for (std::size_t start = 0; start < zscored.size(); start += chunk) {
      const std::size_t n = std::min(chunk, zscored.size() - start);
      ad::Tensor x({n, n_bins}), y({n, M});
      for (std::size_t i = 0; i < n; ++i) {
        std::copy(zscored[start + i].begin(), zscored[start + i].end(),
                  x.values.begin() + i * n_bins);
        std::copy(labels[start + i].begin(), labels[start + i].end(), y.values.begin() + i * M);
      }
      ad::Graph g;
      ad::Var xv = g.input(std::move(x), true);
      ad::Var loss = g.cross_entropy(model.forward(g, xv, false, unused), y, ad::Reduction::kSum);
      g.backward(loss);
      const auto& grad = g.grad(xv).values;
      for (double v : grad) {
        if (!std::isfinite(v)) throw NonFiniteError("non-finite input gradient");
        total += v * v;
      }
    }
  } catch (...) {
    for (std::size_t i = 0; i < saved.size(); ++i) model.params.all()[i].trainable = saved[i];
    throw;
  }
  for (std::size_t i = 0; i < saved.size(); ++i) model.params.all()[i].trainable = saved[i];
  return total / static_cast<double>(zscored.size());
}

struct KnnSmoothness {
  double tv_hard = 0.0;
  double prob_l2 = 0.0;
  double conf_absdiff = 0.0;
  double margin_absdiff = 0.0;
};

// Undirected edge set of the Euclidean k-nearest-neighbour graph. Distance
// ties resolve to the lower index.
inline std::vector<std::pair<std::size_t, std::size_t>> knn_edges(const Matrix& points,
                                                                  std::size_t k) {
  const std::size_t n = points.size();
  require(n > k && k >= 1, "k-nn graph needs N > k >= 1");
  std::set<std::pair<std::size_t, std::size_t>> edges;
  std::vector<std::pair<double, std::size_t>> dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double d = 0.0;
      if (j != i)
        for (std::size_t t = 0; t < points[i].size(); ++t) {
          const double diff = points[i][t] - points[j][t];
          d += diff * diff;
        }
      dist[j] = {j == i ? std::numeric_limits<double>::infinity() : d, j};
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<long>(k), dist.end());
    for (std::size_t r = 0; r < k; ++r) {
      const std::size_t j = dist[r].second;
      edges.insert({std::min(i, j), std::max(i, j)});
    }
  }
  return {edges.begin(), edges.end()};
}

inline Matrix l1_normalize(const Matrix& rows) {
  Matrix out = rows;
  for (auto& r : out) {
    double s = 0.0;
    for (double v : r) s += std::abs(v);
    if (s > 0.0)
      for (auto& v : r) v /= s;
  }
  return out;
}

// Averages over the undirected k-nn edges (u, v) of: hard-label disagreement,
// ||p_u - p_v||^2, |max p_u - max p_v|, and |m_u - m_v| with
// m_i = log p_{i,y_i} - max_{c != y_i} log p_{i,c}.
inline KnnSmoothness knn_smoothness(const PredictionSet& p, const Matrix& spectra,
                                    std::size_t k = 10) {
  p.require_one_hot("knn_smoothness");
  require(spectra.size() == p.size(), "one spectrum per prediction");
  const auto edges = knn_edges(l1_normalize(spectra), k);
  std::vector<double> true_margin(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto& row = p.probs[i];
    const std::size_t y = p.hard_true[i];
    double best_other = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < row.size(); ++c)
      if (c != y) best_other = std::max(best_other, std::log(std::max(row[c], kProbFloor)));
    true_margin[i] = std::log(std::max(row[y], kProbFloor)) - best_other;
  }
  KnnSmoothness s;
  for (auto [u, v] : edges) {
    const auto& pu = p.probs[u];
    const auto& pv = p.probs[v];
    const std::size_t au = detail::argmax(pu), av = detail::argmax(pv);
    s.tv_hard += au != av ? 1.0 : 0.0;
    double l2 = 0.0;
    for (std::size_t c = 0; c < pu.size(); ++c) l2 += (pu[c] - pv[c]) * (pu[c] - pv[c]);
    s.prob_l2 += l2;
    s.conf_absdiff += std::abs(pu[au] - pv[av]);
    s.margin_absdiff += std::abs(true_margin[u] - true_margin[v]);
  }
  const double e = static_cast<double>(edges.size());
  s.tv_hard /= e;
  s.prob_l2 /= e;
  s.conf_absdiff /= e;
  s.margin_absdiff /= e;
  return s;
}

struct DiagnosticsReport {
  double acc = 0.0;
  double nll = 0.0;
  double brier = 0.0;
  double ece = 0.0;
  double margin_mean = 0.0;
  double margin_p10 = 0.0;
  double entropy_mean = 0.0;
  double jacobian_norm_mean = 0.0;
  double knn_tv_hard = 0.0;
  double knn_prob_l2 = 0.0;
  double knn_conf_absdiff = 0.0;
  double knn_margin_absdiff = 0.0;
};

inline nlohmann::json to_json(const DiagnosticsReport& r) {
  return {{"acc", r.acc},
          {"nll", r.nll},
          {"brier", r.brier},
          {"ece", r.ece},
          {"margin_mean", r.margin_mean},
          {"margin_p10", r.margin_p10},
          {"entropy_mean", r.entropy_mean},
          {"jacobian_norm_mean", r.jacobian_norm_mean},
          {"knn_tv_hard", r.knn_tv_hard},
          {"knn_prob_l2", r.knn_prob_l2},
          {"knn_conf_absdiff", r.knn_conf_absdiff},
          {"knn_margin_absdiff", r.knn_margin_absdiff}};
}

// +1 when larger is better, -1 when smaller is better.
inline int metric_direction(const std::string& name) {
  if (name == "acc" || name == "ape" || name == "margin_mean" || name == "margin_p10") return 1;
  return -1;
}

inline Matrix zscore_rows(const spectra::LabeledDataset& ds) {
  Matrix out;
  out.reserve(ds.size());
  for (const auto& s : ds.spectra) out.push_back(spectra::zscore(s.counts));
  return out;
}

inline Matrix count_rows(const spectra::LabeledDataset& ds) {
  Matrix out;
  out.reserve(ds.size());
  for (const auto& s : ds.spectra) out.push_back(s.counts);
  return out;
}

// All twelve diagnostics of a model on a one-hot dataset.
inline DiagnosticsReport diagnostics(models::ModelBundle& model, const spectra::LabeledDataset& ds,
                                     std::size_t knn_k = 10) {
  const Matrix x = zscore_rows(ds);
  PredictionSet p = PredictionSet::from(models::infer(model, x), ds.labels);
  DiagnosticsReport r;
  r.acc = accuracy(p);
  const Calibration c = calibration_suite(p);
  r.nll = c.nll;
  r.brier = c.brier;
  r.ece = c.ece;
  const Margins m = margins(p, MarginSpace::kLogit);
  r.margin_mean = m.mean;
  r.margin_p10 = m.p10;
  r.entropy_mean = entropy_mean(p.probs);
  r.jacobian_norm_mean = jacobian_norm_mean(model, x, ds.labels);
  const KnnSmoothness k = knn_smoothness(p, count_rows(ds), knn_k);
  r.knn_tv_hard = k.tv_hard;
  r.knn_prob_l2 = k.prob_l2;
  r.knn_conf_absdiff = k.conf_absdiff;
  r.knn_margin_absdiff = k.margin_absdiff;
  return r;
}

}  // namespace specdapt::metrics
