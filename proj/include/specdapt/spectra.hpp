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

// Surrogate detector response and labeled spectrum synthesis.
//
// A detector is described by a resolution curve FWHM(E) = a + b*sqrt(E) + c*E,
// a linear energy calibration (gain, offset), and the fraction of each line's
// intensity that lands in a flat Compton shelf instead of the photopeak.
// Source and target domains differ only in their DetectorModel.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "specdapt/core.hpp"

namespace specdapt::spectra {

inline constexpr double kFwhmToSigma = 2.354820045030949;  // 2*sqrt(2 ln 2)
inline constexpr double kElectronMassKeV = 511.0;

struct EnergyGrid {
  std::size_t n_bins = 1024;
  double e_min = 0.0;
  double e_max = 3000.0;

  double bin_width() const { return (e_max - e_min) / static_cast<double>(n_bins); }
  double lower_edge(std::size_t i) const { return e_min + static_cast<double>(i) * bin_width(); }
  double center(std::size_t i) const { return lower_edge(i) + 0.5 * bin_width(); }

  // Bin containing energy e, clamped to the grid.
  std::size_t bin_of(double e) const {
    double pos = std::floor((e - e_min) / bin_width());
    if (pos < 0) return 0;
    if (pos >= static_cast<double>(n_bins)) return n_bins - 1;
    return static_cast<std::size_t>(pos);
  }

  void validate() const {
    require(n_bins >= 1, "energy grid needs at least one bin");
    require(std::isfinite(e_min) && std::isfinite(e_max) && e_max > e_min,
            "energy grid needs e_max > e_min");
  }

  bool operator==(const EnergyGrid&) const = default;
};

struct DetectorModel {
  double fwhm_a = 2.0;
  double fwhm_b = 0.7;
  double fwhm_c = 0.0;
  double gain = 1.0;
  double offset = 0.0;
  double compton_fraction = 0.5;
  double low_energy_cutoff = 30.0;

  double fwhm(double e) const {
    return fwhm_a + fwhm_b * std::sqrt(std::max(e, 0.0)) + fwhm_c * e;
  }
  double calibrate(double e) const { return gain * e + offset; }

  void validate(const EnergyGrid& grid) const {
    require(gain > 0.0, "detector gain must be positive");
    require(compton_fraction >= 0.0 && compton_fraction < 1.0,
            "compton_fraction must lie in [0, 1)");
    // FWHM is concave/linear in sqrt(E); checking the ends and a dense sweep
    // catches every sign change for the coefficient ranges we accept.
    for (std::size_t i = 0; i <= 64; ++i) {
      double e = grid.e_min + (grid.e_max - grid.e_min) * static_cast<double>(i) / 64.0;
      require(fwhm(e) > 0.0, "detector FWHM must be positive over the grid");
    }
  }
};

struct GammaLine {
  double energy = 0.0;     // keV
  double intensity = 0.0;  // branching weight
};

struct LineList {
  std::string isotope;
  std::vector<GammaLine> lines;
};

struct Spectrum {
  std::vector<double> counts;
  double live_time = 1.0;
  EnergyGrid grid;

  double total() const { return std::accumulate(counts.begin(), counts.end(), 0.0); }
};

struct SeedTemplate {
  std::string isotope;
  std::vector<double> shape;
};

enum class DomainTag { kSource, kTarget };
enum class SplitTag { kTrain, kVal, kTest };

inline std::string to_string(DomainTag d) { return d == DomainTag::kSource ? "source" : "target"; }
inline std::string to_string(SplitTag s) {
  switch (s) {
    case SplitTag::kTrain: return "train";
    case SplitTag::kVal: return "val";
    case SplitTag::kTest: return "test";
  }
  return "?";
}
inline DomainTag domain_from_string(const std::string& s) {
  if (s == "source") return DomainTag::kSource;
  if (s == "target") return DomainTag::kTarget;
  throw ValidationError("unknown domain tag '" + s + "'");
}
inline SplitTag split_from_string(const std::string& s) {
  if (s == "train") return SplitTag::kTrain;
  if (s == "val") return SplitTag::kVal;
  if (s == "test") return SplitTag::kTest;
  throw ValidationError("unknown split tag '" + s + "'");
}

struct LabeledDataset {
  std::vector<Spectrum> spectra;
  std::vector<std::vector<double>> labels;  // N x M proportions
  std::vector<std::string> classes;
  DomainTag domain_tag = DomainTag::kSource;
  SplitTag split_tag = SplitTag::kTrain;

  std::size_t size() const { return spectra.size(); }

  // Sub-dataset with the given rows, in the given order.
  LabeledDataset subset(std::span<const std::size_t> rows) const {
    LabeledDataset out;
    out.classes = classes;
    out.domain_tag = domain_tag;
    out.split_tag = split_tag;
    for (auto r : rows) {
      require(r < size(), "subset row out of range");
      out.spectra.push_back(spectra[r]);
      out.labels.push_back(labels[r]);
    }
    return out;
  }

  // Label rows must lie on the simplex within `tol` (1e-6 suits labels that
  // went through 32-bit storage).
  void validate(double tol = 1e-9) const {
    require(labels.size() == spectra.size(), "label count must equal spectrum count");
    for (const auto& row : labels) {
      require(row.size() == classes.size(), "label width must equal class count");
      double s = 0.0;
      for (double v : row) {
        require(v >= 0.0, "labels must be nonnegative");
        s += v;
      }
      require(std::abs(s - 1.0) <= tol, "label rows must sum to 1");
    }
  }
};

namespace detail {

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Adds `mass` spread as N(center, sigma) integrated over each bin. Mass that
// falls outside the grid is lost (the caller normalizes).
inline void deposit_gaussian(std::vector<double>& out, const EnergyGrid& grid,
                             double center, double sigma, double mass) {
  const double w = grid.bin_width();
  const double lo_e = center - 8.0 * sigma, hi_e = center + 8.0 * sigma;
  if (hi_e < grid.e_min || lo_e > grid.e_max) return;
  std::size_t lo = grid.bin_of(lo_e), hi = grid.bin_of(hi_e);
  double prev = normal_cdf((grid.lower_edge(lo) - center) / sigma);
  for (std::size_t i = lo; i <= hi; ++i) {
    double next = normal_cdf((grid.lower_edge(i) + w - center) / sigma);
    out[i] += mass * (next - prev);
    prev = next;
  }
}

// Adds `mass` uniformly over the energy interval [e0, e1), prorated by bin overlap.
inline void deposit_uniform(std::vector<double>& out, const EnergyGrid& grid,
                            double e0, double e1, double mass) {
  e0 = std::max(e0, grid.e_min);
  e1 = std::min(e1, grid.e_max);
  if (!(e1 > e0)) return;
  const double density = mass / (e1 - e0);
  const double w = grid.bin_width();
  for (std::size_t i = grid.bin_of(e0); i < grid.n_bins; ++i) {
    double a = std::max(e0, grid.lower_edge(i));
    double b = std::min(e1, grid.lower_edge(i) + w);
    if (a >= e1) break;
    if (b > a) out[i] += density * (b - a);
  }
}

}  // namespace detail

// Maximum energy a single Compton scatter deposits: E minus the backscatter
// photon energy E/(1 + 2E/511).
inline double compton_edge(double energy) {
  return energy - energy / (1.0 + 2.0 * energy / kElectronMassKeV);
}

// Renders the expected response of `det` to one isotope and l1-normalizes it.
inline SeedTemplate render_template(const LineList& lines, const DetectorModel& det,
                                    const EnergyGrid& grid) {
  grid.validate();
  det.validate(grid);
  require(!lines.lines.empty(), "line list for '" + lines.isotope + "' is empty");
  bool any_above = false;
  for (const auto& l : lines.lines) {
    require(l.intensity > 0.0, "line intensities must be positive");
    if (det.calibrate(l.energy) >= det.low_energy_cutoff) any_above = true;
  }
  if (!any_above) throw ValidationError("empty template: every line of '" + lines.isotope +
                                        "' lies below the low-energy cutoff");

  std::vector<double> shape(grid.n_bins, 0.0);
  for (const auto& l : lines.lines) {
    const double center = det.calibrate(l.energy);
    const double sigma = det.fwhm(center) / kFwhmToSigma;
    detail::deposit_gaussian(shape, grid, center, sigma,
                             l.intensity * (1.0 - det.compton_fraction));
    if (det.compton_fraction > 0.0) {
      const double edge = det.calibrate(compton_edge(l.energy));
      detail::deposit_uniform(shape, grid, det.low_energy_cutoff, edge,
                              l.intensity * det.compton_fraction);
    }
  }
  for (std::size_t i = 0; i < grid.n_bins; ++i)
    if (grid.center(i) < det.low_energy_cutoff) shape[i] = 0.0;

  const double total = std::accumulate(shape.begin(), shape.end(), 0.0);
  if (!(total > 0.0)) throw ValidationError("degenerate template: '" + lines.isotope +
                                            "' deposits no mass on the grid");
  for (auto& v : shape) v /= total;
  return {lines.isotope, std::move(shape)};
}

// Redistributes every bin's content with a Gaussian of energy-dependent width.
// Each kernel is renormalized over the grid, so total counts are conserved.
inline std::vector<double> gaussian_broaden(std::span<const double> counts,
                                            const std::function<double(double)>& fwhm_fn,
                                            const EnergyGrid& grid) {
  grid.validate();
  require(counts.size() == grid.n_bins, "counts length must equal the number of bins");
  std::vector<double> out(grid.n_bins, 0.0);
  std::vector<double> kernel;
  const double w = grid.bin_width();
  for (std::size_t i = 0; i < grid.n_bins; ++i) {
    const double fwhm = fwhm_fn(grid.center(i));
    require(std::isfinite(fwhm) && fwhm > 0.0, "FWHM must be positive everywhere on the grid");
    if (counts[i] == 0.0) continue;
    const double sigma = fwhm / kFwhmToSigma;
    const double c = grid.center(i);
    std::size_t lo = grid.bin_of(c - 8.0 * sigma), hi = grid.bin_of(c + 8.0 * sigma);
    kernel.assign(hi - lo + 1, 0.0);
    double prev = detail::normal_cdf((grid.lower_edge(lo) - c) / sigma);
    double sum = 0.0;
    for (std::size_t j = lo; j <= hi; ++j) {
      double next = detail::normal_cdf((grid.lower_edge(j) + w - c) / sigma);
      kernel[j - lo] = next - prev;
      sum += next - prev;
      prev = next;
    }
    if (!(sum > 0.0)) {
      out[i] += counts[i];
      continue;
    }
    for (std::size_t j = lo; j <= hi; ++j) out[j] += counts[i] * kernel[j - lo] / sum;
  }
  return out;
}

// Population z-score. A constant input maps to all zeros.
inline std::vector<double> zscore(std::span<const double> x) {
  require(x.size() >= 2, "zscore needs at least two values");
  const double n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= n;
  std::vector<double> out(x.size(), 0.0);
  const double sd = std::sqrt(var);
  if (!(sd > 0.0) || sd < 1e-300) return out;
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean) / sd;
  return out;
}

inline std::vector<double> dirichlet(std::span<const double> alpha, Rng& rng) {
  std::vector<double> out(alpha.size());
  double total = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    require(alpha[i] > 0.0, "Dirichlet parameters must be positive");
    out[i] = std::gamma_distribution<double>(alpha[i], 1.0)(rng.engine());
    total += out[i];
  }
  if (!(total > 0.0)) {
    // Every gamma draw underflowed (tiny alphas); fall back to a vertex.
    std::fill(out.begin(), out.end(), 0.0);
    out[rng.index(out.size())] = 1.0;
    return out;
  }
  for (auto& v : out) v /= total;
  return out;
}

struct Mixture {
  SeedTemplate mixed;
  std::vector<double> label;  // one entry per input template
};

// Mixes a fixed set of templates with known fractions.
inline Mixture mix_with_fractions(std::span<const SeedTemplate> templates,
                                  std::span<const std::size_t> chosen,
                                  std::span<const double> fractions) {
  require(!templates.empty(), "cannot mix an empty template list");
  require(chosen.size() == fractions.size(), "one fraction per chosen template");
  const std::size_t n_bins = templates.front().shape.size();
  Mixture m;
  m.label.assign(templates.size(), 0.0);
  m.mixed.shape.assign(n_bins, 0.0);
  std::string name;
  for (std::size_t k = 0; k < chosen.size(); ++k) {
    const auto& t = templates[chosen[k]];
    require(t.shape.size() == n_bins, "templates must share a grid");
    for (std::size_t i = 0; i < n_bins; ++i) m.mixed.shape[i] += fractions[k] * t.shape[i];
    m.label[chosen[k]] += fractions[k];
    if (!name.empty()) name += "+";
    name += t.isotope;
  }
  m.mixed.isotope = name;
  return m;
}

// Picks k in [1, max_components] uniformly, then k distinct templates, then
// their fractions from Dirichlet(alpha restricted to the chosen templates).
inline Mixture mix_seeds(std::span<const SeedTemplate> templates, std::span<const double> alpha,
                         std::size_t max_components, Rng& rng) {
  require(!templates.empty(), "cannot mix an empty template list");
  require(alpha.size() == templates.size(), "one Dirichlet parameter per template");
  require(max_components >= 1 && max_components <= templates.size(),
          "max_components must lie in [1, number of templates]");
  const std::size_t k = 1 + rng.index(max_components);
  std::vector<std::size_t> order(templates.size());
  std::iota(order.begin(), order.end(), 0);
  // Partial Fisher-Yates: the first k entries are a uniform k-subset.
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + rng.index(order.size() - i);
    std::swap(order[i], order[j]);
  }
  std::vector<std::size_t> chosen(order.begin(), order.begin() + static_cast<long>(k));
  std::sort(chosen.begin(), chosen.end());
  std::vector<double> a(k);
  for (std::size_t i = 0; i < k; ++i) a[i] = alpha[chosen[i]];
  std::vector<double> fractions = k == 1 ? std::vector<double>{1.0} : dirichlet(a, rng);
  return mix_with_fractions(templates, chosen, fractions);
}

// SNR is defined as expected foreground counts over sqrt(expected background
// counts): F = snr * sqrt(B) with B = bg_cps * live_time.
inline Spectrum synthesize(const SeedTemplate& fg, const SeedTemplate& bg, double snr_target,
                           double bg_cps, double live_time, const EnergyGrid& grid, Rng& rng) {
  require(live_time > 0.0, "live_time must be positive");
  require(bg_cps > 0.0, "background count rate must be positive");
  require(snr_target >= 0.0, "SNR must be nonnegative");
  require(fg.shape.size() == grid.n_bins && bg.shape.size() == grid.n_bins,
          "templates must match the grid");
  const double expected_bg = bg_cps * live_time;
  const double expected_fg = snr_target * std::sqrt(expected_bg);
  Spectrum s;
  s.grid = grid;
  s.live_time = live_time;
  s.counts.resize(grid.n_bins);
  for (std::size_t i = 0; i < grid.n_bins; ++i) {
    const double lambda = expected_fg * fg.shape[i] + expected_bg * bg.shape[i];
    s.counts[i] = lambda > 0.0
                      ? static_cast<double>(std::poisson_distribution<long long>(lambda)(rng.engine()))
                      : 0.0;
  }
  return s;
}

// Built-in emission lines (keV, relative intensity). Rounded literature values.
inline const std::map<std::string, std::vector<GammaLine>>& line_library() {
  static const std::map<std::string, std::vector<GammaLine>> kLib = {
      {"Am241", {{59.5, 0.36}}},
      {"Ba133", {{81.0, 0.33}, {276.4, 0.07}, {302.9, 0.18}, {356.0, 0.62}, {383.8, 0.09}}},
      {"Co57", {{122.1, 0.86}, {136.5, 0.11}}},
      {"Co60", {{1173.2, 1.0}, {1332.5, 1.0}}},
      {"Cs137", {{661.7, 0.85}}},
      {"Eu152",
       {{121.8, 0.28}, {344.3, 0.27}, {778.9, 0.13}, {964.1, 0.15}, {1085.8, 0.10},
        {1112.1, 0.14}, {1408.0, 0.21}}},
      {"I131", {{284.3, 0.06}, {364.5, 0.82}, {637.0, 0.07}}},
      {"Ir192", {{296.0, 0.29}, {308.5, 0.30}, {316.5, 0.83}, {468.1, 0.48}, {604.4, 0.08}}},
      {"Mn54", {{834.8, 1.0}}},
      {"Mo99", {{140.5, 0.89}, {181.1, 0.06}, {739.5, 0.12}, {777.9, 0.04}}},
      {"Na22", {{511.0, 1.8}, {1274.5, 1.0}}},
      {"Tc99m", {{140.5, 0.89}}},
      {"Th228", {{238.6, 0.43}, {583.2, 0.31}, {2614.5, 0.36}}},
      {"Y88", {{898.0, 0.94}, {1836.1, 0.99}}},
  };
  return kLib;
}

inline LineList isotope_lines(const std::string& name) {
  const auto& lib = line_library();
  auto it = lib.find(name);
  if (it == lib.end()) throw ValidationError("unknown isotope '" + name + "'");
  return {name, it->second};
}

// Falling cosmic continuum in measured energy, broadened by the detector
// resolution and l1-normalized. Independent of the calibration.
inline std::vector<double> cosmic_continuum(const DetectorModel& det, const EnergyGrid& grid) {
  std::vector<double> continuum(grid.n_bins, 0.0);
  for (std::size_t i = 0; i < grid.n_bins; ++i) {
    const double e = grid.center(i);
    if (e >= det.low_energy_cutoff) continuum[i] = std::exp(-e / 400.0);
  }
  continuum = gaussian_broaden(continuum, [&](double e) { return det.fwhm(e); }, grid);
  for (std::size_t i = 0; i < grid.n_bins; ++i)
    if (grid.center(i) < det.low_energy_cutoff) continuum[i] = 0.0;
  const double total = std::accumulate(continuum.begin(), continuum.end(), 0.0);
  require(total > 0.0, "cosmic continuum has no mass above the cutoff");
  for (auto& v : continuum) v /= total;
  return continuum;
}

// Aggregate natural background: K-40, U/Ra and Th chain lines plus a cosmic
// continuum, equal parts by mass.
inline SeedTemplate background_template(const DetectorModel& det, const EnergyGrid& grid,
                                        std::span<const double> continuum) {
  LineList natural{"background",
                   {{1460.8, 0.107 * 6.0}, {351.9, 0.36}, {609.3, 0.46}, {1764.5, 0.15},
                    {238.6, 0.43}, {583.2, 0.31}, {911.2, 0.26}, {2614.5, 0.36}}};
  SeedTemplate lines = render_template(natural, det, grid);
  require(continuum.size() == grid.n_bins, "continuum must match the grid");
  SeedTemplate out{"background", std::vector<double>(grid.n_bins)};
  for (std::size_t i = 0; i < grid.n_bins; ++i)
    out.shape[i] = 0.5 * lines.shape[i] + 0.5 * continuum[i];
  const double total = std::accumulate(out.shape.begin(), out.shape.end(), 0.0);
  for (auto& v : out.shape) v /= total;
  return out;
}

inline SeedTemplate background_template(const DetectorModel& det, const EnergyGrid& grid) {
  return background_template(det, grid, cosmic_continuum(det, grid));
}

enum class MixingMode { kSingleLabel, kMixed };

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  double draw(Rng& rng) const { return hi > lo ? rng.uniform(lo, hi) : lo; }
};

struct SplitSizes {
  std::size_t train = 512;
  std::size_t val = 128;
  std::size_t test = 128;
};

struct ScenarioConfig {
  std::vector<std::string> isotopes;
  EnergyGrid grid;
  DetectorModel source_detector;
  DetectorModel target_detector;
  SplitSizes source_sizes{2048, 256, 256};
  SplitSizes target_sizes{512, 128, 128};
  MixingMode mixing = MixingMode::kSingleLabel;
  std::size_t max_components = 14;
  double alpha = 1.0;
  Range snr{20.0, 60.0};
  Range bg_cps{50.0, 150.0};
  Range live_time{10.0, 30.0};
  double gain_jitter = 0.003;  // relative std of the per-spectrum gain
  std::uint64_t master_seed = 0;

  // Target = source with gain*(1+0.01), offset+5 keV, fwhm_b*1.3.
  static DetectorModel shifted(const DetectorModel& src, double gain_shift = 0.01,
                               double offset_shift = 5.0, double fwhm_b_scale = 1.3) {
    DetectorModel t = src;
    t.gain = src.gain * (1.0 + gain_shift);
    t.offset = src.offset + offset_shift;
    t.fwhm_b = src.fwhm_b * fwhm_b_scale;
    return t;
  }
};

struct DomainSplits {
  LabeledDataset train;
  LabeledDataset val;
  LabeledDataset test;
};

struct Scenario {
  DomainSplits source;
  DomainSplits target;
};

// One labeled spectrum from the domain's detector with per-spectrum gain jitter.
inline std::pair<Spectrum, std::vector<double>> draw_labeled_spectrum(
    const ScenarioConfig& cfg, const DetectorModel& det, std::span<const double> continuum,
    Rng& rng) {
  DetectorModel jittered = det;
  if (cfg.gain_jitter > 0.0) jittered.gain = det.gain * (1.0 + rng.normal(0.0, cfg.gain_jitter));
  std::vector<SeedTemplate> templates;
  templates.reserve(cfg.isotopes.size());
  for (const auto& iso : cfg.isotopes)
    templates.push_back(render_template(isotope_lines(iso), jittered, cfg.grid));
  const SeedTemplate bg = background_template(jittered, cfg.grid, continuum);
  const std::size_t max_k = cfg.mixing == MixingMode::kSingleLabel ? 1 : cfg.max_components;
  std::vector<double> alpha(templates.size(), cfg.alpha);
  Mixture mix = mix_seeds(templates, alpha, max_k, rng);
  const double snr = cfg.snr.draw(rng);
  const double cps = cfg.bg_cps.draw(rng);
  const double lt = cfg.live_time.draw(rng);
  Spectrum s = synthesize(mix.mixed, bg, snr, cps, lt, cfg.grid, rng);
  return {std::move(s), std::move(mix.label)};
}

inline LabeledDataset build_split(const ScenarioConfig& cfg, DomainTag domain, SplitTag split,
                                  std::size_t n) {
  const DetectorModel& det =
      domain == DomainTag::kSource ? cfg.source_detector : cfg.target_detector;
  LabeledDataset ds;
  ds.classes = cfg.isotopes;
  ds.domain_tag = domain;
  ds.split_tag = split;
  ds.spectra.reserve(n);
  ds.labels.reserve(n);
  const Rng split_rng(derive_seed(cfg.master_seed, {static_cast<std::uint64_t>(domain) + 1,
                                                    static_cast<std::uint64_t>(split) + 1}));
  const std::vector<double> continuum = cosmic_continuum(det, cfg.grid);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = split_rng.substream({i});
    auto [s, label] = draw_labeled_spectrum(cfg, det, continuum, rng);
    ds.spectra.push_back(std::move(s));
    ds.labels.push_back(std::move(label));
  }
  return ds;
}

// Builds the six splits. Every spectrum gets its own substream derived from
// (master seed, domain, split, index), so splits are independent draws.
inline Scenario build_scenario(const ScenarioConfig& cfg) {
  cfg.grid.validate();
  require(!cfg.isotopes.empty(), "scenario needs at least one isotope");
  if (cfg.mixing == MixingMode::kMixed)
    require(cfg.isotopes.size() >= cfg.max_components,
            "fewer isotopes than max_components");
  cfg.source_detector.validate(cfg.grid);
  cfg.target_detector.validate(cfg.grid);
  for (const auto& iso : cfg.isotopes) (void)isotope_lines(iso);
  Scenario sc;
  auto make = [&](DomainTag d, const SplitSizes& sz) {
    return DomainSplits{build_split(cfg, d, SplitTag::kTrain, sz.train),
                        build_split(cfg, d, SplitTag::kVal, sz.val),
                        build_split(cfg, d, SplitTag::kTest, sz.test)};
  };
  sc.source = make(DomainTag::kSource, cfg.source_sizes);
  sc.target = make(DomainTag::kTarget, cfg.target_sizes);
  return sc;
}

// Expected background-only spectrum (mean counts) for a domain.
inline Spectrum mean_background(const ScenarioConfig& cfg, DomainTag domain) {
  const DetectorModel& det =
      domain == DomainTag::kSource ? cfg.source_detector : cfg.target_detector;
  SeedTemplate bg = background_template(det, cfg.grid);
  const double lt = 0.5 * (cfg.live_time.lo + std::max(cfg.live_time.hi, cfg.live_time.lo));
  const double cps = 0.5 * (cfg.bg_cps.lo + std::max(cfg.bg_cps.hi, cfg.bg_cps.lo));
  Spectrum s;
  s.grid = cfg.grid;
  s.live_time = lt;
  s.counts.resize(cfg.grid.n_bins);
  for (std::size_t i = 0; i < cfg.grid.n_bins; ++i) s.counts[i] = bg.shape[i] * cps * lt;
  return s;
}

}  // namespace specdapt::spectra
