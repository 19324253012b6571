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

// Summaries of trial records: mean +/- uncertainty tables, paired p-value
// tables, letter rankings and score-vs-size curves.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"

#include "specdapt/core.hpp"
#include "specdapt/metrics.hpp"
#include "specdapt/stats.hpp"
#include "specdapt/training.hpp"

namespace specdapt::report {

using training::Protocol;
using training::TrialRecord;

inline std::vector<TrialRecord> parse_records(const std::string& jsonl) {
  std::vector<TrialRecord> out;
  std::istringstream in(jsonl);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw CorruptFileError("results line " + std::to_string(lineno) + " is not JSON");
    }
    out.push_back(training::trial_record_from_json(j));
  }
  return out;
}

// (protocol, arch, size) -> values ordered by trial index.
class Cells {
 public:
  Cells(const std::vector<TrialRecord>& recs, const std::string& metric) : metric_(metric) {
    require(!recs.empty(), "no trial records");
    std::set<std::string> hashes;
    std::set<std::uint64_t> seeds;
    for (const auto& r : recs) {
      hashes.insert(r.config_hash);
      seeds.insert(r.master_seed);
    }
    if (hashes.size() != 1 || seeds.size() != 1)
      throw ValidationError("results mix " + std::to_string(hashes.size()) +
                            " config hashes and " + std::to_string(seeds.size()) +
                            " master seeds; refusing to combine them");
    config_hash_ = *hashes.begin();
    master_seed_ = *seeds.begin();
    for (const auto& r : recs) {
      if (std::find(archs_.begin(), archs_.end(), r.arch) == archs_.end()) archs_.push_back(r.arch);
      sizes_.insert(r.size);
      protocols_.insert(r.protocol);
      require(r.metrics.contains(metric), "record lacks metric '" + metric + "'");
      auto& cell = cells_[{r.protocol, r.arch, r.size}];
      if (!cell.emplace(r.trial, r.metrics.at(metric).get<double>()).second)
        throw ValidationError("duplicate record for " + training::to_string(r.protocol) + "/" +
                              r.arch + "/" + std::to_string(r.size) + " trial " +
                              std::to_string(r.trial));
      n_test_[{r.protocol, r.arch, r.size}] = r.n_test;
      if (r.protocol != Protocol::kSourceOnly) fingerprints_[{r.arch, r.size, r.trial}].insert(r.subset_fingerprint);
    }
    for (const auto& [key, fps] : fingerprints_)
      if (fps.size() != 1)
        throw ValidationError("target_only and domain_adapted records are not paired on the same subset");
  }

  const std::vector<std::string>& archs() const { return archs_; }
  const std::set<std::size_t>& sizes() const { return sizes_; }
  const std::set<Protocol>& protocols() const { return protocols_; }
  const std::string& config_hash() const { return config_hash_; }
  std::uint64_t master_seed() const { return master_seed_; }
  const std::string& metric() const { return metric_; }

  bool has(Protocol p, const std::string& a, std::size_t s) const {
    return cells_.contains({p, a, s});
  }
  std::vector<double> values(Protocol p, const std::string& a, std::size_t s) const {
    std::vector<double> v;
    for (const auto& [t, x] : cells_.at({p, a, s})) v.push_back(x);
    return v;
  }
  std::vector<std::size_t> trials(Protocol p, const std::string& a, std::size_t s) const {
    std::vector<std::size_t> v;
    for (const auto& [t, x] : cells_.at({p, a, s})) v.push_back(t);
    return v;
  }
  std::size_t n_test(Protocol p, const std::string& a, std::size_t s) const {
    return n_test_.at({p, a, s});
  }

  // Values of two cells restricted to their common trials, in trial order.
  std::pair<std::vector<double>, std::vector<double>> paired(Protocol pa, const std::string& aa,
                                                             Protocol pb, const std::string& ab,
                                                             std::size_t s) const {
    const auto& ca = cells_.at({pa, aa, s});
    const auto& cb = cells_.at({pb, ab, s});
    std::pair<std::vector<double>, std::vector<double>> out;
    for (const auto& [t, x] : ca) {
      auto it = cb.find(t);
      if (it == cb.end()) continue;
      out.first.push_back(x);
      out.second.push_back(it->second);
    }
    return out;
  }

 private:
  std::string metric_;
  std::string config_hash_;
  std::uint64_t master_seed_ = 0;
  std::vector<std::string> archs_;
  std::set<std::size_t> sizes_;
  std::set<Protocol> protocols_;
  std::map<std::tuple<Protocol, std::string, std::size_t>, std::map<std::size_t, double>> cells_;
  std::map<std::tuple<Protocol, std::string, std::size_t>, std::size_t> n_test_;
  std::map<std::tuple<std::string, std::size_t, std::size_t>, std::set<std::string>> fingerprints_;
};

inline bool accuracy_type(const std::string& metric) { return metric == "acc"; }

struct Output {
  std::string text;
  std::string summary_csv;
  std::string pvalues_csv;
  std::string svg;
  nlohmann::json letters;
};

namespace detail {

inline std::string num(double v, int prec = 3) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
  return buf;
}

inline std::string full(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string pad(const std::string& s, std::size_t w) {
  return s.size() >= w ? s : s + std::string(w - s.size(), ' ');
}

// Sign so that "larger is better" holds for the tested values.
inline std::vector<double> oriented(std::vector<double> v, const std::string& metric) {
  if (metrics::metric_direction(metric) < 0)
    for (auto& x : v) x = -x;
  return v;
}

inline std::string svg_curves(const Cells& c) {
  const double W = 360, H = 260, L = 50, T = 30, gap = 30;
  const std::vector<std::pair<Protocol, const char*>> styles = {
      {Protocol::kSourceOnly, "#7f7f7f"},
      {Protocol::kTargetOnly, "#1f77b4"},
      {Protocol::kDomainAdapted, "#d62728"}};
  const std::vector<std::size_t> sizes(c.sizes().begin(), c.sizes().end());
  const double xmin = std::log2(static_cast<double>(sizes.front()));
  const double xmax = std::max(xmin + 1.0, std::log2(static_cast<double>(sizes.back())));
  double ymin = 1e300, ymax = -1e300;
  for (const auto& a : c.archs())
    for (auto s : sizes)
      for (const auto& [p, col] : styles)
        if (c.has(p, a, s))
          for (double v : c.values(p, a, s)) {
            ymin = std::min(ymin, v);
            ymax = std::max(ymax, v);
          }
  if (!(ymax > ymin)) {
    ymin -= 0.5;
    ymax += 0.5;
  }
  const std::size_t n = c.archs().size();
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(n * (W + L + gap) + gap, 0)
     << "\" height=\"" << num(H + T + 90, 0) << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t ai = 0; ai < n; ++ai) {
    const std::string& a = c.archs()[ai];
    const double x0 = gap + static_cast<double>(ai) * (W + L + gap) + L;
    auto px = [&](std::size_t s) {
      return x0 + (std::log2(static_cast<double>(s)) - xmin) / (xmax - xmin) * W;
    };
    auto py = [&](double v) { return T + H - (v - ymin) / (ymax - ymin) * H; };
    os << "<rect x=\"" << num(x0, 1) << "\" y=\"" << T << "\" width=\"" << W << "\" height=\"" << H
       << "\" fill=\"none\" stroke=\"#444\"/>\n";
    os << "<text x=\"" << num(x0, 1) << "\" y=\"" << T - 8 << "\" font-size=\"13\">" << a << "</text>\n";
    os << "<text x=\"" << num(x0 - L + 4, 1) << "\" y=\"" << T + 10 << "\" font-size=\"10\">" << num(ymax) << "</text>\n";
    os << "<text x=\"" << num(x0 - L + 4, 1) << "\" y=\"" << T + H << "\" font-size=\"10\">" << num(ymin) << "</text>\n";
    for (auto s : sizes)
      os << "<text x=\"" << num(px(s) - 6, 1) << "\" y=\"" << T + H + 14 << "\" font-size=\"10\">" << s << "</text>\n";
    double ly = T + H + 30;
    for (const auto& [p, col] : styles) {
      std::ostringstream pts;
      for (auto s : sizes) {
        if (!c.has(p, a, s)) continue;
        const auto v = c.values(p, a, s);
        const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
        double sd = 0.0;
        if (v.size() > 1) {
          for (double x : v) sd += (x - mean) * (x - mean);
          sd = std::sqrt(sd / static_cast<double>(v.size() - 1));
        }
        pts << num(px(s), 1) << "," << num(py(mean), 1) << " ";
        os << "<line x1=\"" << num(px(s), 1) << "\" x2=\"" << num(px(s), 1) << "\" y1=\""
           << num(py(mean - sd), 1) << "\" y2=\"" << num(py(mean + sd), 1) << "\" stroke=\"" << col
           << "\"/>\n";
        os << "<circle cx=\"" << num(px(s), 1) << "\" cy=\"" << num(py(mean), 1)
           << "\" r=\"3\" fill=\"" << col << "\"/>\n";
      }
      if (!pts.str().empty())
        os << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"1.5\" points=\""
           << pts.str() << "\"/>\n";
      os << "<text x=\"" << num(x0, 1) << "\" y=\"" << num(ly, 1) << "\" font-size=\"10\" fill=\""
         << col << "\">" << training::to_string(p) << "</text>\n";
      ly += 12;
    }
  }
  os << "<text x=\"" << gap << "\" y=\"" << T + H + 72 << "\" font-size=\"10\">target training size (log2 axis), "
     << c.metric() << " mean +/- 1 sd</text>\n</svg>\n";
  return os.str();
}

}  // namespace detail

inline Output build(const std::vector<TrialRecord>& recs, const std::string& metric = "acc",
                    double alpha = 0.01) {
  const Cells c(recs, metric);
  Output out;
  std::ostringstream txt, sum_csv, p_csv;
  const std::vector<std::size_t> sizes(c.sizes().begin(), c.sizes().end());
  const bool acc = accuracy_type(metric);

  txt << "config " << c.config_hash() << "  master seed " << c.master_seed() << "\n\n";
  txt << "Summary: " << metric << " mean +/- uncertainty by target training size\n";
  txt << detail::pad("arch", 11) << detail::pad("protocol", 16);
  for (auto s : sizes) txt << detail::pad(std::to_string(s), 18);
  txt << "\n";
  sum_csv << "config_hash,master_seed,metric,arch,protocol,size,n,mean,sample_std,uncertainty\n";
  for (const auto& a : c.archs())
    for (auto p : c.protocols()) {
      txt << detail::pad(a, 11) << detail::pad(training::to_string(p), 16);
      for (auto s : sizes) {
        if (!c.has(p, a, s)) {
          txt << detail::pad("-", 18);
          continue;
        }
        const auto st = stats::aggregate_trials(c.values(p, a, s), acc, c.n_test(p, a, s));
        txt << detail::pad(detail::num(st.mean) + " +/- " + detail::num(st.uncertainty), 18);
        sum_csv << c.config_hash() << "," << c.master_seed() << "," << metric << "," << a << ","
                << training::to_string(p) << "," << s << "," << st.n << "," << detail::full(st.mean)
                << "," << detail::full(st.sample_std) << "," << detail::full(st.uncertainty) << "\n";
      }
      txt << "\n";
    }

  // One-sided: is domain_adapted better than each baseline?
  p_csv << "config_hash,master_seed,metric,test,arch_a,protocol_a,arch_b,protocol_b,size,n_effective,statistic,p_value\n";
  auto emit = [&](const std::string& test, const std::string& aa, Protocol pa,
                  const std::string& ab, Protocol pb, std::size_t s, const stats::TestResult& r) {
    p_csv << c.config_hash() << "," << c.master_seed() << "," << metric << "," << test << "," << aa
          << "," << training::to_string(pa) << "," << ab << "," << training::to_string(pb) << ","
          << s << "," << r.n_effective << "," << detail::full(r.statistic) << ","
          << detail::full(r.p_value) << "\n";
  };
  txt << "\nOne-sided Wilcoxon p-values, H1: domain_adapted better than baseline\n";
  txt << detail::pad("arch", 11) << detail::pad("baseline", 16);
  for (auto s : sizes) txt << detail::pad(std::to_string(s), 9);
  txt << "\n";
  for (const auto& a : c.archs())
    for (auto base : {Protocol::kTargetOnly, Protocol::kSourceOnly}) {
      txt << detail::pad(a, 11) << detail::pad(training::to_string(base), 16);
      for (auto s : sizes) {
        if (!c.has(Protocol::kDomainAdapted, a, s) || !c.has(base, a, s)) {
          txt << detail::pad("-", 9);
          continue;
        }
        auto [x, y] = c.paired(Protocol::kDomainAdapted, a, base, a, s);
        const auto r = stats::wilcoxon_signed_rank(detail::oriented(x, metric),
                                                   detail::oriented(y, metric),
                                                   stats::Sidedness::kOneSidedGreater);
        txt << detail::pad(stats::format_p(r.p_value), 9);
        emit("one_sided_greater", a, Protocol::kDomainAdapted, a, base, s, r);
      }
      txt << "\n";
    }

  // Two-sided architecture comparisons within each protocol and size.
  if (c.archs().size() > 1) {
    txt << "\nTwo-sided Wilcoxon p-values between architectures\n";
    for (auto p : c.protocols())
      for (auto s : sizes)
        for (std::size_t i = 0; i < c.archs().size(); ++i)
          for (std::size_t j = i + 1; j < c.archs().size(); ++j) {
            const auto& ai = c.archs()[i];
            const auto& aj = c.archs()[j];
            if (!c.has(p, ai, s) || !c.has(p, aj, s)) continue;
            auto [x, y] = c.paired(p, ai, p, aj, s);
            const auto r = stats::wilcoxon_signed_rank(x, y, stats::Sidedness::kTwoSided);
            txt << "  " << detail::pad(training::to_string(p), 16) << detail::pad(std::to_string(s), 6)
                << detail::pad(ai + " vs " + aj, 24) << stats::format_p(r.p_value) << "\n";
            emit("two_sided", ai, p, aj, p, s, r);
          }
  }

  // Letter rankings: architectures sharing a letter are indistinguishable.
  txt << "\nArchitecture rankings (alpha " << alpha << "; shared letter = indistinguishable)\n";
  out.letters = nlohmann::json::array();
  for (auto p : c.protocols())
    for (auto s : sizes) {
      std::vector<std::pair<std::string, std::vector<double>>> scores;
      for (const auto& a : c.archs())
        if (c.has(p, a, s)) scores.emplace_back(a, c.values(p, a, s));
      if (scores.empty()) continue;
      bool same_len = true;
      for (const auto& sc : scores) same_len = same_len && sc.second.size() == scores[0].second.size();
      if (!same_len) continue;
      const auto ranked =
          stats::rank_architectures(scores, alpha, metrics::metric_direction(metric) > 0);
      txt << "  " << detail::pad(training::to_string(p), 16) << detail::pad(std::to_string(s), 6);
      nlohmann::json entry = {{"protocol", training::to_string(p)}, {"size", s}};
      for (const auto& r : ranked) {
        txt << r.name << " [" << r.letters << "] ";
        entry["ranking"].push_back({{"arch", r.name}, {"mean", r.mean}, {"letters", r.letters}});
      }
      txt << "\n";
      out.letters.push_back(entry);
    }

  out.text = txt.str();
  out.summary_csv = sum_csv.str();
  out.pvalues_csv = p_csv.str();
  out.svg = detail::svg_curves(c);
  return out;
}

}  // namespace specdapt::report
