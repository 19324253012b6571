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

// KernelSHAP over contiguous groups of channels. Absent groups take the
// baseline spectrum's bins; the explained output is one class probability.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "specdapt/core.hpp"
#include "specdapt/models.hpp"
#include "specdapt/spectra.hpp"

namespace specdapt::explain {

// Full enumeration is used up to this many coalitions.
inline constexpr std::size_t kMaxEnumerated = 4096;

// Maps a batch of raw spectra (rows) to one scalar output each.
using BatchFn = std::function<std::vector<double>(const Matrix&)>;

struct ShapExplanation {
  std::vector<std::pair<std::size_t, std::size_t>> groups;  // [first, last) bins
  std::vector<double> phi;
  double base_value = 0.0;  // f(baseline)
  double full_value = 0.0;  // f(x)
  std::size_t class_index = 0;
  double residual = 0.0;  // f(x) - base - sum(phi)
  std::size_t n_coalitions = 0;
  bool exact = false;
};

inline std::vector<std::pair<std::size_t, std::size_t>> contiguous_groups(std::size_t n_bins,
                                                                          std::size_t n_groups) {
  require(n_groups >= 1, "need at least one group");
  require(n_bins % n_groups == 0, "n_groups (" + std::to_string(n_groups) +
                                      ") must divide n_bins (" + std::to_string(n_bins) + ")");
  const std::size_t w = n_bins / n_groups;
  std::vector<std::pair<std::size_t, std::size_t>> g;
  for (std::size_t i = 0; i < n_groups; ++i) g.emplace_back(i * w, (i + 1) * w);
  return g;
}

// Probability of `class_index` after zscoring each raw spectrum.
inline BatchFn class_probability(models::ModelBundle& model, std::size_t class_index) {
  require(class_index < model.spec.n_classes, "class index out of range");
  return [&model, class_index](const Matrix& raw) {
    Matrix z;
    z.reserve(raw.size());
    for (const auto& r : raw) z.push_back(spectra::zscore(r));
    const Matrix p = models::predict_proba(model, z);
    std::vector<double> out;
    out.reserve(p.size());
    for (const auto& row : p) out.push_back(row[class_index]);
    return out;
  };
}

struct ShapConfig {
  std::size_t n_groups = 32;
  std::size_t n_coalitions = 2048;  // used only when enumeration is too large
  std::uint64_t seed = 0;
};

namespace detail {

inline std::vector<double> masked(const std::vector<double>& x, const std::vector<double>& base,
                                  const std::vector<std::pair<std::size_t, std::size_t>>& groups,
                                  const std::vector<char>& present) {
  std::vector<double> out = base;
  for (std::size_t g = 0; g < groups.size(); ++g)
    if (present[g])
      std::copy(x.begin() + static_cast<long>(groups[g].first),
                x.begin() + static_cast<long>(groups[g].second),
                out.begin() + static_cast<long>(groups[g].first));
  return out;
}

inline double log_choose(std::size_t n, std::size_t k) {
  return std::lgamma(static_cast<double>(n) + 1.0) - std::lgamma(static_cast<double>(k) + 1.0) -
         std::lgamma(static_cast<double>(n - k) + 1.0);
}

}  // namespace detail

// Shapley-kernel weighted least squares with the efficiency constraint
// sum(phi) = f(x) - f(baseline), imposed by eliminating the last group.
inline ShapExplanation kernel_shap(const BatchFn& f, const std::vector<double>& x,
                                   const std::vector<double>& baseline, const ShapConfig& cfg,
                                   std::size_t class_index = 0) {
  require(x.size() == baseline.size(), "baseline must share the spectrum's grid");
  ShapExplanation ex;
  ex.class_index = class_index;
  ex.groups = contiguous_groups(x.size(), cfg.n_groups);
  const std::size_t G = cfg.n_groups;

  const std::vector<double> ends = f(Matrix{baseline, x});
  require(ends.size() == 2, "model function returned the wrong number of outputs");
  ex.base_value = ends[0];
  ex.full_value = ends[1];
  const double delta = ex.full_value - ex.base_value;
  if (G == 1) {
    ex.phi = {delta};
    ex.exact = true;
    return ex;
  }

  // Interior coalitions (neither empty nor full) with their kernel weights.
  std::vector<std::vector<char>> coalitions;
  std::vector<double> weights;
  ex.exact = G < 63 && (std::size_t{1} << G) <= kMaxEnumerated;
  if (ex.exact) {
    for (std::size_t mask = 1; mask + 1 < (std::size_t{1} << G); ++mask) {
      std::vector<char> z(G);
      std::size_t s = 0;
      for (std::size_t g = 0; g < G; ++g) s += (z[g] = (mask >> g) & 1);
      coalitions.push_back(std::move(z));
      weights.push_back(static_cast<double>(G - 1) /
                        (std::exp(detail::log_choose(G, s)) * static_cast<double>(s * (G - s))));
    }
  } else {
    require(cfg.n_coalitions >= 1, "n_coalitions must be >= 1");
    // Size s is drawn with probability proportional to the total kernel mass
    // of that size, (G-1)/(s(G-s)); members are then uniform, so every
    // sampled coalition carries equal weight.
    std::vector<double> size_mass(G - 1);
    for (std::size_t s = 1; s < G; ++s)
      size_mass[s - 1] = 1.0 / static_cast<double>(s * (G - s));
    std::discrete_distribution<std::size_t> size_dist(size_mass.begin(), size_mass.end());
    Rng rng = Rng(cfg.seed).substream("kernel-shap");
    std::vector<std::size_t> perm(G);
    for (std::size_t i = 0; i < cfg.n_coalitions; ++i) {
      const std::size_t s = size_dist(rng.engine()) + 1;
      std::iota(perm.begin(), perm.end(), 0);
      for (std::size_t j = 0; j < s; ++j) std::swap(perm[j], perm[j + rng.index(G - j)]);
      std::vector<char> z(G, 0);
      for (std::size_t j = 0; j < s; ++j) z[perm[j]] = 1;
      coalitions.push_back(std::move(z));
      weights.push_back(1.0);
    }
  }
  ex.n_coalitions = coalitions.size() + 2;

  Matrix inputs;
  inputs.reserve(coalitions.size());
  for (const auto& z : coalitions) inputs.push_back(detail::masked(x, baseline, ex.groups, z));
  const std::vector<double> fz = f(inputs);
  require(fz.size() == coalitions.size(), "model function returned the wrong number of outputs");

  // y - z_last * delta = sum_{j<last} (z_j - z_last) phi_j
  const std::size_t K = coalitions.size(), P = G - 1;
  Eigen::MatrixXd A(K, P);
  Eigen::VectorXd b(K);
  for (std::size_t i = 0; i < K; ++i) {
    const double sw = std::sqrt(weights[i]);
    const double zl = coalitions[i][G - 1];
    for (std::size_t j = 0; j < P; ++j) A(i, j) = sw * (coalitions[i][j] - zl);
    b(i) = sw * (fz[i] - ex.base_value - zl * delta);
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
  qr.setThreshold(1e-10);
  if (qr.rank() < static_cast<Eigen::Index>(P))
    throw ValidationError("degenerate coalition design (rank " + std::to_string(qr.rank()) +
                          " of " + std::to_string(P) + " from " + std::to_string(K) +
                          " coalitions); increase n_coalitions");
  const Eigen::VectorXd sol = qr.solve(b);
  ex.phi.assign(sol.data(), sol.data() + P);
  ex.phi.push_back(delta - std::accumulate(ex.phi.begin(), ex.phi.end(), 0.0));
  ex.residual =
      ex.full_value - ex.base_value - std::accumulate(ex.phi.begin(), ex.phi.end(), 0.0);
  return ex;
}

inline ShapExplanation kernel_shap(models::ModelBundle& model, const spectra::Spectrum& spectrum,
                                   const spectra::Spectrum& baseline, const ShapConfig& cfg,
                                   std::size_t class_index) {
  require(spectrum.grid == baseline.grid, "baseline must share the spectrum's grid");
  require(spectrum.counts.size() == model.spec.n_bins, "spectrum does not match the model");
  return kernel_shap(class_probability(model, class_index), spectrum.counts, baseline.counts, cfg,
                     class_index);
}

inline nlohmann::json to_json(const ShapExplanation& e, const spectra::EnergyGrid& grid) {
  nlohmann::json groups = nlohmann::json::array();
  for (std::size_t g = 0; g < e.groups.size(); ++g)
    groups.push_back({{"first_bin", e.groups[g].first},
                      {"last_bin", e.groups[g].second - 1},
                      {"e_lo_kev", grid.lower_edge(e.groups[g].first)},
                      {"e_hi_kev", grid.lower_edge(e.groups[g].second)},
                      {"phi", e.phi[g]}});
  return {{"class_index", e.class_index}, {"base_value", e.base_value},
          {"full_value", e.full_value},   {"residual", e.residual},
          {"n_coalitions", e.n_coalitions}, {"exact", e.exact},
          {"groups", groups}};
}

// Group indices by descending phi (largest positive contribution first).
inline std::vector<std::size_t> top_groups(const ShapExplanation& e, std::size_t k) {
  std::vector<std::size_t> idx(e.phi.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return e.phi[a] > e.phi[b]; });
  idx.resize(std::min(k, idx.size()));
  return idx;
}

struct ReportInput {
  std::string label_a = "model A";
  std::string label_b = "model B";
  std::vector<std::string> classes;
  std::size_t top_k = 3;
};

struct Report {
  nlohmann::json json;
  std::string svg;
};

namespace detail {

inline std::string fmt(double v, int prec = 2) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
  return buf;
}

inline void svg_panel(std::ostringstream& os, const spectra::Spectrum& s, const ShapExplanation& e,
                      const std::string& title, double x0, double y0, double w, double h) {
  const std::size_t n = s.counts.size();
  double max_abs = 0.0;
  for (double p : e.phi) max_abs = std::max(max_abs, std::abs(p));
  const double bin_w = w / static_cast<double>(n);
  for (std::size_t g = 0; g < e.groups.size(); ++g) {
    const double a = max_abs > 0.0 ? std::abs(e.phi[g]) / max_abs : 0.0;
    const char* colour = e.phi[g] >= 0.0 ? "#d62728" : "#1f77b4";
    os << "<rect x=\"" << fmt(x0 + bin_w * static_cast<double>(e.groups[g].first)) << "\" y=\""
       << fmt(y0) << "\" width=\""
       << fmt(bin_w * static_cast<double>(e.groups[g].second - e.groups[g].first))
       << "\" height=\"" << fmt(h) << "\" fill=\"" << colour << "\" fill-opacity=\""
       << fmt(0.6 * a, 3) << "\"/>\n";
  }
  // counts on a log axis
  double top = 1.0;
  for (double c : s.counts) top = std::max(top, std::log10(1.0 + c));
  os << "<polyline fill=\"none\" stroke=\"black\" stroke-width=\"1\" points=\"";
  for (std::size_t i = 0; i < n; ++i) {
    const double v = std::log10(1.0 + std::max(0.0, s.counts[i])) / top;
    os << fmt(x0 + bin_w * (static_cast<double>(i) + 0.5)) << "," << fmt(y0 + h - v * h) << " ";
  }
  os << "\"/>\n";
  os << "<rect x=\"" << fmt(x0) << "\" y=\"" << fmt(y0) << "\" width=\"" << fmt(w)
     << "\" height=\"" << fmt(h) << "\" fill=\"none\" stroke=\"#444\"/>\n";
  os << "<text x=\"" << fmt(x0) << "\" y=\"" << fmt(y0 - 6) << "\" font-size=\"12\">" << title
     << "</text>\n";
  os << "<text x=\"" << fmt(x0) << "\" y=\"" << fmt(y0 + h + 14) << "\" font-size=\"10\">"
     << fmt(s.grid.e_min, 0) << " keV</text>\n";
  os << "<text x=\"" << fmt(x0 + w - 50) << "\" y=\"" << fmt(y0 + h + 14)
     << "\" font-size=\"10\">" << fmt(s.grid.e_max, 0) << " keV</text>\n";
}

}  // namespace detail

// Side-by-side explanation of one spectrum under one or two models.
inline Report explain_report(const spectra::Spectrum& spectrum, const spectra::Spectrum& baseline,
                             const ShapExplanation& a, const std::optional<ShapExplanation>& b,
                             const ReportInput& in) {
  if (b) {
    require(a.phi.size() == b->phi.size() && a.class_index == b->class_index,
            "explanations disagree on groups or class");
  }
  Report r;
  auto salient = [&](const ShapExplanation& e) {
    nlohmann::json arr = nlohmann::json::array();
    for (auto g : top_groups(e, in.top_k))
      arr.push_back({{"group", g},
                     {"e_lo_kev", spectrum.grid.lower_edge(e.groups[g].first)},
                     {"e_hi_kev", spectrum.grid.lower_edge(e.groups[g].second)},
                     {"phi", e.phi[g]}});
    return arr;
  };
  r.json["class_index"] = a.class_index;
  if (a.class_index < in.classes.size()) r.json["class"] = in.classes[a.class_index];
  r.json["counts"] = spectrum.counts;
  r.json["baseline"] = baseline.counts;
  r.json["grid"] = {{"n_bins", spectrum.grid.n_bins},
                    {"e_min", spectrum.grid.e_min},
                    {"e_max", spectrum.grid.e_max}};
  r.json["models"] = nlohmann::json::array();
  r.json["models"].push_back({{"label", in.label_a},
                              {"explanation", to_json(a, spectrum.grid)},
                              {"top_salient", salient(a)}});
  if (b)
    r.json["models"].push_back({{"label", in.label_b},
                                {"explanation", to_json(*b, spectrum.grid)},
                                {"top_salient", salient(*b)}});

  const double w = 520, h = 220, pad = 30;
  const double total_w = b ? 2 * w + 3 * pad : w + 2 * pad;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << detail::fmt(total_w, 0)
     << "\" height=\"" << detail::fmt(h + 2.5 * pad, 0) << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  const std::string cls =
      a.class_index < in.classes.size() ? in.classes[a.class_index] : std::to_string(a.class_index);
  detail::svg_panel(os, spectrum, a, in.label_a + " (" + cls + ")", pad, pad, w, h);
  if (b) detail::svg_panel(os, spectrum, *b, in.label_b + " (" + cls + ")", 2 * pad + w, pad, w, h);
  os << "</svg>\n";
  r.svg = os.str();
  return r;
}

}  // namespace specdapt::explain
