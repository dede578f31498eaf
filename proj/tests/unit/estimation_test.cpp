#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "flusurv/errors.hpp"
#include "flusurv/estimation.hpp"
#include "flusurv/stats.hpp"
#include "oracles.hpp"

namespace flusurv {
namespace {

std::vector<double> ones(std::size_t n) { return std::vector<double>(n, 1.0); }

std::vector<double> bernoulli_y(int n, int positives) {
  std::vector<double> y(n, 0.0);
  std::fill(y.begin(), y.begin() + positives, 1.0);
  return y;
}

TEST(Stats, NormalQuantileAndQuantiles) {
  EXPECT_NEAR(stats::normal_two_sided_quantile(0.95), 1.959963984540054, 1e-12);
  EXPECT_NEAR(stats::two_sided_p(1.959963984540054), 0.05, 1e-12);
  EXPECT_DOUBLE_EQ(stats::quantile({1, 2, 3, 4}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(stats::quantile({5}, 0.25), 5);
  const auto b = stats::box_summary({4, 1, 3, 2, 5});
  EXPECT_DOUBLE_EQ(b.q1, 2);
  EXPECT_DOUBLE_EQ(b.median, 3);
  EXPECT_DOUBLE_EQ(b.q3, 4);
  EXPECT_EQ(stats::box_summary({}).count, 0u);
}

TEST(WeightedProportion, Examples) {
  EXPECT_DOUBLE_EQ(weighted_proportion(bernoulli_y(100, 10), ones(100)), 0.1);
  const std::vector<double> y = {1, 0}, w = {3, 1};
  EXPECT_DOUBLE_EQ(weighted_proportion(y, w), 0.75);
  const std::vector<double> empty;
  EXPECT_THROW(weighted_proportion(empty, empty), ContractViolation);
  const std::vector<double> bad = {1, 0};
  EXPECT_THROW(weighted_proportion(y, bad), ContractViolation);
}

TEST(LinearizedVariance, EqualWeightReduction) {
  const auto y = bernoulli_y(100, 50);
  EXPECT_NEAR(*linearized_variance(y, ones(100), 0.5), 0.25 / 99, 1e-15);
  const auto y2 = bernoulli_y(37, 5);
  const double p = 5.0 / 37;
  EXPECT_NEAR(*linearized_variance(y2, ones(37), p), p * (1 - p) / 36, 1e-15);
  EXPECT_DOUBLE_EQ(*linearized_variance(bernoulli_y(10, 10), ones(10), 1.0), 0.0);
  EXPECT_FALSE(linearized_variance(bernoulli_y(1, 1), ones(1), 1.0));
}

TEST(LinearizedVariance, WeightScaleInvariant) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.2, 3.0);
  std::vector<double> y(200), w(200), w2(200);
  for (int i = 0; i < 200; ++i) {
    y[i] = (rng() % 5) == 0;
    w[i] = u(rng);
    w2[i] = w[i] * 7.5;
  }
  const double p = weighted_proportion(y, w);
  EXPECT_NEAR(weighted_proportion(y, w2), p, 1e-15);
  EXPECT_NEAR(*linearized_variance(y, w, p), *linearized_variance(y, w2, p), 1e-15);
}

TEST(LogitCi, HandDeltaMethod) {
  const auto y = bernoulli_y(100, 50);
  const auto cell = estimate_cell(y, ones(100));
  EXPECT_NEAR(*cell.se_logit(), 0.2010, 1e-4);
  EXPECT_NEAR(cell.ci_low, 0.4027, 1e-4);
  EXPECT_NEAR(cell.ci_high, 0.5973, 1e-4);
  const auto [lo, hi] = testing::hand_logit_ci(0.5, 100);
  EXPECT_NEAR(cell.ci_low, lo, 1e-12);
  EXPECT_NEAR(cell.ci_high, hi, 1e-12);
  EXPECT_EQ(cell.method, CiMethod::kLogit);
}

TEST(LogitCi, ZeroVarianceAndBounds) {
  const auto ci = logit_ci(0.3, 0.0);
  EXPECT_DOUBLE_EQ(ci.low, 0.3);
  EXPECT_DOUBLE_EQ(ci.high, 0.3);
  const auto wide = logit_ci(0.01, 10.0);
  EXPECT_GE(wide.low, 0.0);
  EXPECT_LE(wide.high, 1.0);
  EXPECT_THROW(logit_ci(0.0, 0.1), ContractViolation);
}

TEST(ExactFallback, ZeroAndOneCells) {
  const auto zero = estimate_cell(bernoulli_y(50, 0), ones(50));
  EXPECT_EQ(zero.method, CiMethod::kExactFallback);
  EXPECT_DOUBLE_EQ(zero.ci_low, 0.0);
  // Clopper-Pearson upper bound for 0/50: 1 - 0.025^(1/50).
  EXPECT_NEAR(zero.ci_high, 1 - std::pow(0.025, 1.0 / 50), 1e-12);
  const auto one = estimate_cell(bernoulli_y(50, 50), ones(50));
  EXPECT_DOUBLE_EQ(one.ci_high, 1.0);
  EXPECT_NEAR(one.ci_low, std::pow(0.025, 1.0 / 50), 1e-12);
  // Unequal weights shrink the effective sample size.
  std::vector<double> w(50, 1.0);
  w[0] = 10;
  const auto uneq = estimate_cell(bernoulli_y(50, 0), w);
  EXPECT_GT(uneq.ci_high, zero.ci_high);
  EXPECT_EQ(to_string(CiMethod::kExactFallback), "exact_fallback");
}

TEST(EstimateCell, SingleRowHasNoVariance) {
  const auto c = estimate_cell(bernoulli_y(1, 0), ones(1));
  EXPECT_FALSE(c.variance);
  EXPECT_LE(c.ci_low, c.p_hat);
  EXPECT_GE(c.ci_high, c.p_hat);
}

TEST(EstimateCell, OrderingAndScaleInvariance) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.1, 4.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 5 + static_cast<int>(rng() % 300);
    std::vector<double> y(n), w(n), w2(n);
    const double rate = (trial % 10) / 10.0;
    for (int i = 0; i < n; ++i) {
      y[i] = u(rng) / 4.0 < rate;
      w[i] = u(rng);
      w2[i] = w[i] * 0.013;
    }
    const auto a = estimate_cell(y, w);
    const auto b = estimate_cell(y, w2);
    EXPECT_LE(0.0, a.ci_low);
    EXPECT_LE(a.ci_low, a.p_hat);
    EXPECT_LE(a.p_hat, a.ci_high);
    EXPECT_LE(a.ci_high, 1.0);
    EXPECT_NEAR(a.p_hat, b.p_hat, 1e-12 * std::max(1.0, a.p_hat));
    EXPECT_NEAR(a.ci_low, b.ci_low, 1e-12);
    EXPECT_NEAR(a.ci_high, b.ci_high, 1e-12);
  }
}

TEST(CompareGroups, SymmetryAndIdentity) {
  const auto a = estimate_cell(bernoulli_y(400, 20), ones(400));
  const auto b = estimate_cell(bernoulli_y(300, 40), ones(300));
  const auto same = compare_groups(a, a);
  EXPECT_DOUBLE_EQ(*same.z, 0.0);
  EXPECT_DOUBLE_EQ(*same.p_value, 1.0);
  EXPECT_FALSE(same.significant);
  const auto ab = compare_groups(a, b), ba = compare_groups(b, a);
  EXPECT_DOUBLE_EQ(*ab.z, -*ba.z);
  EXPECT_DOUBLE_EQ(*ab.p_value, *ba.p_value);
  EXPECT_EQ(ab.significant, *ab.p_value < 0.05);
  const double se = std::hypot(*a.se_logit(), *b.se_logit());
  EXPECT_NEAR(*ab.z, (stats::logit(a.p_hat) - stats::logit(b.p_hat)) / se, 1e-12);
  const auto zero = estimate_cell(bernoulli_y(100, 0), ones(100));
  EXPECT_TRUE(compare_groups(a, zero).indeterminate());
}

struct Panel {
  ResponseTable responses;
  ParticipantTable participants;
  std::vector<OnsetTable> onsets;
};

Panel random_panel(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Panel p;
  p.responses = testing::random_table(rng, 120, 8, 0.8, 0.25);
  std::vector<Participant> people;
  std::uniform_int_distribution<int> age(0, 90);
  for (int i = 0; i < 120; ++i) {
    people.push_back({"R" + std::to_string(i), age(rng), "F", "E", std::string("X"), {}});
  }
  p.participants = ParticipantTable::from_participants(people);
  for (const auto& g : default_groupings()) p.onsets.push_back(mark_onsets(p.responses, g));
  return p;
}

TEST(EstimateBy, UnsplitCellsMatchDirectComputation) {
  const auto p = random_panel(4);
  std::vector<double> w(p.responses.size());
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.5, 2.0);
  for (auto& x : w) x = u(rng);
  w[3] = std::nan("");
  const auto cells = estimate_by(p.responses, p.onsets, w, FactorSpec{});
  ASSERT_EQ(cells.size(), 3 * p.responses.weeks().count());
  for (const auto& c : cells) {
    std::size_t g = c.grouping == "CLI1+" ? 0 : c.grouping == "CLI2+" ? 1 : 2;
    std::vector<double> y, ww;
    for (std::size_t i = 0; i < p.responses.size(); ++i) {
      if (p.responses[i].week != c.week || std::isnan(w[i])) continue;
      y.push_back(p.onsets[g].is_onset[i]);
      ww.push_back(w[i]);
    }
    const auto direct = estimate_cell(y, ww);
    EXPECT_EQ(c.n, y.size());
    EXPECT_DOUBLE_EQ(c.p_hat, direct.p_hat);
    EXPECT_DOUBLE_EQ(c.ci_low, direct.ci_low);
    EXPECT_DOUBLE_EQ(c.ci_high, direct.ci_high);
  }
}

TEST(EstimateBy, AgeSplitIsAdditive) {
  const auto p = random_panel(6);
  const auto w = unit_weights(std::vector<std::uint8_t>(p.responses.size(), 1));
  const auto whole = estimate_by(p.responses, p.onsets, w, FactorSpec{});
  FactorSpec f;
  f.age_bands = AgeBands::parse("0-4,5-19,20-64,65+");
  f.participants = &p.participants;
  const auto split = estimate_by(p.responses, p.onsets, w, f);
  for (const auto& c : whole) {
    double num = 0, den = 0;
    for (const auto& s : split) {
      if (s.grouping != c.grouping || s.week != c.week) continue;
      EXPECT_EQ(s.factor_name, "age_band");
      num += s.p_hat * s.sum_w;
      den += s.sum_w;
    }
    EXPECT_NEAR(den, c.sum_w, 1e-9);
    EXPECT_NEAR(num, c.p_hat * c.sum_w, 1e-9);
  }
}

TEST(EstimateBy, LocationTagging) {
  const auto p = random_panel(8);
  const auto w = unit_weights(std::vector<std::uint8_t>(p.responses.size(), 1));
  FactorSpec f;
  f.location = "Auckland Metro";
  for (const auto& c : estimate_by(p.responses, p.onsets, w, f)) {
    EXPECT_EQ(c.factor_name, "location");
    EXPECT_EQ(c.factor_value, "Auckland Metro");
  }
}

TEST(Adjustment, UnbiasedPanelHasNoEffect) {
  // Full panel, every participant responds every week; sample mix equals reference.
  std::vector<ResponseRecord> r;
  std::vector<Participant> people;
  const auto w0 = SurveyWeek::parse("2020-05-03");
  std::mt19937_64 rng(9);
  std::bernoulli_distribution sick(0.1);
  for (int i = 0; i < 200; ++i) {
    const std::string id = "P" + std::to_string(i);
    people.push_back({id, i % 2 ? 10 : 50, "F", "E", std::string("A"), {}});
    for (int w = 0; w < 12; ++w) {
      r.push_back({id, w0 + w, sick(rng) ? SymptomSet::of({Symptom::kCough}) : SymptomSet{}});
    }
  }
  const auto responses = ResponseTable::from_records(r);
  const auto pt = ParticipantTable::from_participants(people);
  const auto ref = ReferencePopulation::from_entries(
      {{"A", AgeBand::parse("0-4"), 0}, {"A", AgeBand::parse("5-9"), 250},
       {"A", AgeBand::parse("10-14"), 250}, {"A", AgeBand::parse("15-19"), 0},
       {"A", AgeBand::parse("20+"), 500}});
  WeightingConfig cfg;
  cfg.bands = AgeBands::parse("0-4,5-19,20+");
  const std::vector<SymptomGrouping> groupings = {cli1_plus()};
  const auto rows = adjustment_effect(responses, pt, ref, {4, 1, WarmupPolicy::kStrict}, cfg,
                                      groupings);
  for (const auto& row : rows) {
    if (row.week < w0 + 4 || !row.naive || *row.naive == 0) continue;
    EXPECT_NEAR(*row.rel_consistent_only, 0.0, 1e-12);
    EXPECT_NEAR(*row.rel_weighted_only, 0.0, 1e-12);
    EXPECT_NEAR(*row.rel_both, 0.0, 1e-12);
  }
}

TEST(Adjustment, RelativeChangeUndefinedWhenNaiveIsZero) {
  const auto w0 = SurveyWeek::parse("2020-05-03");
  const auto responses = ResponseTable::from_records({{"P", w0, {}}, {"P", w0 + 1, {}}});
  const auto pt = ParticipantTable::from_participants({{"P", 30, "F", "E", std::string("A"), {}}});
  const auto ref = ReferencePopulation::from_entries({{"A", AgeBand::parse("0+"), 10}});
  WeightingConfig cfg;
  cfg.bands = AgeBands::parse("0+");
  const std::vector<SymptomGrouping> groupings = {cli1_plus()};
  for (const auto& row : adjustment_effect(responses, pt, ref, {1, 0}, cfg, groupings)) {
    EXPECT_FALSE(row.rel_consistent_only);
    EXPECT_FALSE(row.rel_weighted_only);
  }
}

}  // namespace
}  // namespace flusurv
