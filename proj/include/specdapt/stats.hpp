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

// Paired-trial statistics: Wilcoxon signed-rank tests, trial aggregation and
// compact letter displays.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "specdapt/core.hpp"

namespace specdapt::stats {

// Above this many nonzero differences the normal approximation is used.
inline constexpr std::size_t kExactLimit = 25;

enum class Sidedness { kOneSidedGreater, kTwoSided };

struct TestResult {
  double statistic = 0.0;  // W+, sum of ranks of positive differences
  double p_value = 1.0;
  std::size_t n_effective = 0;
  Sidedness sidedness = Sidedness::kOneSidedGreater;
  bool exact = true;
  bool degenerate = false;  // every difference was zero
};

// Average ranks of |d| (1-based), ties sharing the mean of their positions.
inline std::vector<double> average_ranks(const std::vector<double>& abs_values) {
  const std::size_t n = abs_values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return abs_values[a] < abs_values[b]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && abs_values[order[j + 1]] == abs_values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
    i = j + 1;
  }
  return ranks;
}

// Exact null distribution of W+ over all 2^n sign assignments of the given
// ranks. Ranks are multiples of 1/2, so the sum is tracked in half-units.
// Returns counts indexed by 2*W.
inline std::vector<double> signed_rank_distribution(const std::vector<double>& ranks) {
  std::vector<std::size_t> units;
  std::size_t total = 0;
  for (double r : ranks) {
    units.push_back(static_cast<std::size_t>(std::llround(2.0 * r)));
    total += units.back();
  }
  std::vector<double> counts(total + 1, 0.0);
  counts[0] = 1.0;
  std::size_t reach = 0;
  for (auto u : units) {
    for (std::size_t s = reach + 1; s-- > 0;)
      if (counts[s] != 0.0) counts[s + u] += counts[s];
    reach += u;
  }
  return counts;
}

// Wilcoxon signed-rank test on paired differences d = a - b. Zero
// differences are dropped; one-sided tests use H1: a > b.
inline TestResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b,
                                       Sidedness sidedness) {
  require(a.size() == b.size(), "paired samples must have equal length");
  require(!a.empty(), "paired samples must be nonempty");
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i) {
    require(std::isfinite(a[i]) && std::isfinite(b[i]), "paired samples must be finite");
    if (a[i] - b[i] != 0.0) d.push_back(a[i] - b[i]);
  }
  TestResult res;
  res.sidedness = sidedness;
  res.n_effective = d.size();
  if (d.empty()) {
    res.degenerate = true;
    res.p_value = 1.0;
    return res;
  }
  std::vector<double> absd(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) absd[i] = std::abs(d[i]);
  const std::vector<double> ranks = average_ranks(absd);
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d[i] > 0.0) res.statistic += ranks[i];

  const std::size_t n = d.size();
  double p_ge = 0.0, p_le = 0.0;
  if (n <= kExactLimit) {
    res.exact = true;
    const std::vector<double> counts = signed_rank_distribution(ranks);
    const auto w2 = static_cast<std::size_t>(std::llround(2.0 * res.statistic));
    const double all = std::ldexp(1.0, static_cast<int>(n));
    double ge = 0.0, le = 0.0;
    for (std::size_t s = 0; s < counts.size(); ++s) {
      if (s >= w2) ge += counts[s];
      if (s <= w2) le += counts[s];
    }
    p_ge = ge / all;
    p_le = le / all;
  } else {
    res.exact = false;
    const double nn = static_cast<double>(n);
    const double mean = nn * (nn + 1.0) / 4.0;
    double tie_term = 0.0;
    std::map<double, std::size_t> groups;
    for (double r : ranks) ++groups[r];
    for (const auto& [r, t] : groups) {
      const double tt = static_cast<double>(t);
      tie_term += tt * tt * tt - tt;
    }
    const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
    const double sd = std::sqrt(var);
    auto upper = [](double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); };
    p_ge = upper((res.statistic - mean - 0.5) / sd);
    p_le = 1.0 - upper((res.statistic - mean + 0.5) / sd);
  }
  res.p_value = sidedness == Sidedness::kOneSidedGreater
                    ? p_ge
                    : std::min(1.0, 2.0 * std::min(p_ge, p_le));
  res.p_value = std::clamp(res.p_value, 0.0, 1.0);
  return res;
}

struct TrialSummary {
  double mean = 0.0;
  double sample_std = 0.0;
  double uncertainty = 0.0;  // sqrt(s^2 + sigma_test^2)
  std::size_t n = 0;
};

// Mean, sample std and the augmented uncertainty. For accuracy-type metrics
// with a finite test set of n_test samples the finite-test binomial variance
// p(1-p)/n_test is added; pass n_test = 0 to omit it.
inline TrialSummary aggregate_trials(const std::vector<double>& values, bool accuracy_type,
                                     std::size_t n_test) {
  if (values.size() < 2)
    throw DegenerateStatisticsError("aggregate_trials needs at least two records per cell");
  TrialSummary s;
  s.n = values.size();
  const double n = static_cast<double>(values.size());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.sample_std = std::sqrt(ss / (n - 1.0));
  double test_var = 0.0;
  if (accuracy_type && n_test > 0) {
    const double p = std::clamp(s.mean, 0.0, 1.0);
    test_var = p * (1.0 - p) / static_cast<double>(n_test);
  }
  s.uncertainty = std::sqrt(s.sample_std * s.sample_std + test_var);
  return s;
}

struct RankedArch {
  std::string name;
  double mean = 0.0;
  std::string letters;
};

// Compact letter display. Architectures are ordered by mean score (best
// first, with `higher_is_better`), pairs are indistinguishable when the
// two-sided Wilcoxon p >= alpha, and letters come from a greedy clique cover:
// each still-unlettered architecture opens a new letter, which is then given
// to every architecture (in rank order) indistinguishable from all current
// holders of that letter.
inline std::vector<RankedArch> rank_architectures(
    const std::vector<std::pair<std::string, std::vector<double>>>& scores, double alpha = 0.01,
    bool higher_is_better = true) {
  require(!scores.empty(), "rank_architectures needs at least one architecture");
  const std::size_t n = scores.size();
  for (const auto& [name, v] : scores)
    require(v.size() == scores.front().second.size() && !v.empty(),
            "all score lists must share one nonzero length");
  std::vector<RankedArch> ranked(n);
  for (std::size_t i = 0; i < n; ++i) {
    ranked[i].name = scores[i].first;
    const auto& v = scores[i].second;
    ranked[i].mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return higher_is_better ? ranked[a].mean > ranked[b].mean : ranked[a].mean < ranked[b].mean;
  });
  std::vector<std::vector<bool>> same(n, std::vector<bool>(n, true));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const TestResult t =
          wilcoxon_signed_rank(scores[i].second, scores[j].second, Sidedness::kTwoSided);
      same[i][j] = same[j][i] = t.p_value >= alpha;
    }
  char letter = 'A';
  for (std::size_t oi : order) {
    if (!ranked[oi].letters.empty()) continue;
    std::vector<std::size_t> members{oi};
    for (std::size_t oj : order) {
      if (oj == oi) continue;
      bool ok = true;
      for (auto m : members) ok = ok && same[m][oj];
      if (ok) members.push_back(oj);
    }
    for (auto m : members) ranked[m].letters += letter;
    ++letter;
  }
  for (auto& r : ranked) std::sort(r.letters.begin(), r.letters.end());
  std::vector<RankedArch> out;
  for (auto i : order) out.push_back(ranked[i]);
  return out;
}

// Three-decimal display used in printed tables; CSV keeps full precision.
inline std::string format_p(double p) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", p);
  return buf;
}

}  // namespace specdapt::stats
