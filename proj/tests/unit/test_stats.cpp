// Copyright 2026 The specdapt Authors. SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "../support/oracles.hpp"
#include "specdapt/stats.hpp"

using namespace specdapt;
using namespace specdapt::stats;

TEST(Wilcoxon, AllPositiveGivesTwoToMinusN) {
  for (std::size_t n = 1; n <= 12; ++n) {
    std::vector<double> a(n), b(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) a[i] = 0.1 * static_cast<double>(i + 1);
    auto r = wilcoxon_signed_rank(a, b, Sidedness::kOneSidedGreater);
    EXPECT_DOUBLE_EQ(r.p_value, std::ldexp(1.0, -static_cast<int>(n)));
    EXPECT_DOUBLE_EQ(r.statistic, static_cast<double>(n * (n + 1) / 2));
    EXPECT_TRUE(r.exact);
  }
}

TEST(Wilcoxon, TenTrialsAllPositive) {
  std::vector<double> a(10), b(10, 0.5);
  for (int i = 0; i < 10; ++i) a[i] = 0.9 + 0.001 * i;
  EXPECT_NEAR(wilcoxon_signed_rank(a, b, Sidedness::kOneSidedGreater).p_value, 0.0009766, 1e-7);
  EXPECT_NEAR(wilcoxon_signed_rank(a, b, Sidedness::kTwoSided).p_value, 0.0019531, 1e-7);
}

TEST(Wilcoxon, ThreeSamplesByHand) {
  // d = {1, -2, 3}: W+ = 4. Over the 8 sign patterns W+ takes
  // 0,1,2,3,3,4,5,6, so P(W+ >= 4) = 3/8.
  auto r = wilcoxon_signed_rank({1, -2, 3}, {0, 0, 0}, Sidedness::kOneSidedGreater);
  EXPECT_DOUBLE_EQ(r.statistic, 4.0);
  EXPECT_DOUBLE_EQ(r.p_value, 0.375);
  // W+ = 3 sits at the centre: P(W+ >= 3) = 5/8.
  r = wilcoxon_signed_rank({-1, -2, 3}, {0, 0, 0}, Sidedness::kOneSidedGreater);
  EXPECT_DOUBLE_EQ(r.statistic, 3.0);
  EXPECT_DOUBLE_EQ(r.p_value, 0.625);
}

TEST(Wilcoxon, MatchesEnumerationOracle) {
  std::mt19937_64 gen(2024);
  std::normal_distribution<double> nd(0.2, 1.0);
  std::uniform_int_distribution<int> nsize(1, 12);
  for (int t = 0; t < 200; ++t) {
    const int n = nsize(gen);
    std::vector<double> a(n), b(n), d(n);
    for (int i = 0; i < n; ++i) {
      a[i] = nd(gen);
      b[i] = nd(gen);
      d[i] = a[i] - b[i];
    }
    const double got = wilcoxon_signed_rank(a, b, Sidedness::kOneSidedGreater).p_value;
    EXPECT_NEAR(got, oracle::wilcoxon_upper_p(d), 1e-12);
  }
}

TEST(Wilcoxon, DegenerateAndZerosDropped) {
  auto r = wilcoxon_signed_rank({1, 2, 3}, {1, 2, 3}, Sidedness::kTwoSided);
  EXPECT_TRUE(r.degenerate);
  EXPECT_EQ(r.n_effective, 0u);
  EXPECT_DOUBLE_EQ(r.p_value, 1.0);
  r = wilcoxon_signed_rank({1, 2, 3.5}, {1, 1, 3}, Sidedness::kOneSidedGreater);
  EXPECT_EQ(r.n_effective, 2u);
  EXPECT_DOUBLE_EQ(r.p_value, 0.25);
}

TEST(Wilcoxon, ScaleInvarianceAndAntisymmetry) {
  std::vector<double> a = {0.3, 0.9, 0.1, 0.7, 0.55, 0.2}, b = {0.25, 0.4, 0.3, 0.1, 0.5, 0.6};
  auto base = wilcoxon_signed_rank(a, b, Sidedness::kOneSidedGreater);
  std::vector<double> a3 = a, b3 = b;
  for (auto& v : a3) v *= 3.0;
  for (auto& v : b3) v *= 3.0;
  EXPECT_DOUBLE_EQ(wilcoxon_signed_rank(a3, b3, Sidedness::kOneSidedGreater).p_value, base.p_value);
  EXPECT_DOUBLE_EQ(wilcoxon_signed_rank(a, b, Sidedness::kTwoSided).p_value,
                   wilcoxon_signed_rank(b, a, Sidedness::kTwoSided).p_value);
  // One-sided p of (a,b) and (b,a) overlap only at the observed statistic.
  auto rev = wilcoxon_signed_rank(b, a, Sidedness::kOneSidedGreater);
  EXPECT_GE(base.p_value + rev.p_value, 1.0);
}

TEST(Wilcoxon, TiesUseAverageRanks) {
  auto r = average_ranks({2.0, 1.0, 2.0, 3.0});
  EXPECT_EQ(r, (std::vector<double>{2.5, 1.0, 2.5, 4.0}));
  // d = {1, 1, -1}: ranks all 2, W+ = 4, patterns W+ in {0,2,2,2,4,4,4,6} -> P(>=4) = 1/2.
  auto t = wilcoxon_signed_rank({1, 1, -1}, {0, 0, 0}, Sidedness::kOneSidedGreater);
  EXPECT_DOUBLE_EQ(t.statistic, 4.0);
  EXPECT_DOUBLE_EQ(t.p_value, 0.5);
}

TEST(Wilcoxon, NormalApproximationAboveExactLimit) {
  std::vector<double> a(40), b(40, 0.0);
  for (int i = 0; i < 40; ++i) a[i] = (i % 4 == 0 ? -1.0 : 1.0) * (i + 1);
  auto r = wilcoxon_signed_rank(a, b, Sidedness::kOneSidedGreater);
  EXPECT_FALSE(r.exact);
  EXPECT_GT(r.p_value, 0.0);
  EXPECT_LT(r.p_value, 0.05);
}

TEST(Wilcoxon, RejectsBadInput) {
  EXPECT_THROW(wilcoxon_signed_rank({1}, {1, 2}, Sidedness::kTwoSided), ValidationError);
  EXPECT_THROW(wilcoxon_signed_rank({}, {}, Sidedness::kTwoSided), ValidationError);
  EXPECT_THROW(wilcoxon_signed_rank({NAN}, {1}, Sidedness::kTwoSided), ValidationError);
}

TEST(Aggregate, MeanStdAndUncertainty) {
  auto s = aggregate_trials({0.0, 1.0}, false, 0);
  EXPECT_DOUBLE_EQ(s.mean, 0.5);
  EXPECT_DOUBLE_EQ(s.sample_std, std::sqrt(0.5));
  EXPECT_DOUBLE_EQ(s.uncertainty, s.sample_std);
  auto acc = aggregate_trials({0.8, 0.8}, true, 100);
  EXPECT_DOUBLE_EQ(acc.sample_std, 0.0);
  EXPECT_NEAR(acc.uncertainty, std::sqrt(0.8 * 0.2 / 100.0), 1e-15);
  EXPECT_THROW(aggregate_trials({1.0}, false, 0), DegenerateStatisticsError);
  try {
    aggregate_trials({}, false, 0);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ExitCode::kDegenerateStatistics);
  }
}

TEST(Letters, GroupingCases) {
  std::vector<double> base = {0.5, 0.6, 0.7, 0.8, 0.55, 0.65, 0.75, 0.85, 0.52, 0.62};
  auto one = rank_architectures({{"X", base}});
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].letters, "A");

  auto same = rank_architectures({{"X", base}, {"Y", base}}, 0.01);
  EXPECT_EQ(same[0].letters, "A");
  EXPECT_EQ(same[1].letters, "A");

  std::vector<double> high = base;
  for (auto& v : high) v += 1.0;
  auto split = rank_architectures({{"low", base}, {"high", high}}, 0.01);
  EXPECT_EQ(split[0].name, "high");
  EXPECT_EQ(split[0].letters, "A");
  EXPECT_EQ(split[1].letters, "B");

  auto lower_better = rank_architectures({{"low", base}, {"high", high}}, 0.01, false);
  EXPECT_EQ(lower_better[0].name, "low");
}

TEST(Letters, OverlappingGroups) {
  // high vs mid and mid vs low are indistinguishable at alpha 0.01, high vs low is not.
  std::vector<double> low(10), mid(10), high(10);
  for (int i = 0; i < 10; ++i) {
    low[i] = 0.1 * i;
    mid[i] = low[i] + (i % 2 == 0 ? 1.1 : -0.1);
    high[i] = low[i] + 1.0;
  }
  auto r = rank_architectures({{"low", low}, {"mid", mid}, {"high", high}}, 0.01);
  EXPECT_EQ(r[0].name, "high");
  EXPECT_EQ(r[0].letters, "A");
  EXPECT_EQ(r[1].name, "mid");
  EXPECT_EQ(r[1].letters, "AB");
  EXPECT_EQ(r[2].letters, "B");
}

TEST(Format, ThreeDecimals) {
  EXPECT_EQ(format_p(0.0009766), "0.001");
  EXPECT_EQ(format_p(0.0019531), "0.002");
  EXPECT_EQ(format_p(1.0), "1.000");
}
