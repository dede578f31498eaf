#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "flusurv/consistency.hpp"
#include "flusurv/incidents.hpp"
#include "flusurv/raking.hpp"
#include "flusurv/survey_data.hpp"

namespace flusurv {

enum class CiMethod {
  kLogit,          // Wald interval on the log-odds scale
  kExactFallback,  // Clopper-Pearson at the effective sample size
};

std::string_view to_string(CiMethod method);

struct Interval {
  double low = 0;
  double high = 0;
};

// Sum(w * y) / Sum(w). Throws ContractViolation for empty input, mismatched
// lengths, or non-positive weights.
double weighted_proportion(std::span<const double> y, std::span<const double> w);

// With-replacement linearisation treating the weights as fixed:
// z_i = w_i (y_i - p) / Sum(w), var = n/(n-1) * Sum (z_i - mean z)^2.
// Empty when n < 2.
std::optional<double> linearized_variance(std::span<const double> y,
                                          std::span<const double> w, double p_hat);

// Wald interval on the logit scale, mapped back with the inverse logit.
// Requires 0 < p_hat < 1 (ContractViolation otherwise).
Interval logit_ci(double p_hat, double variance, double level = 0.95);

// Clopper-Pearson interval for an all-zero or all-one cell, evaluated at the
// effective sample size (Sum w)^2 / Sum w^2.
Interval exact_fallback_ci(double p_hat, double n_eff, double level = 0.95);

struct EstimateCell {
  std::string grouping;
  SurveyWeek week;
  std::string factor_name = "all";
  std::string factor_value = "all";

  std::size_t n = 0;
  double sum_w = 0;
  double sum_w2 = 0;
  double p_hat = 0;
  std::optional<double> variance;
  double ci_low = 0;
  double ci_high = 0;
  CiMethod method = CiMethod::kLogit;

  double n_eff() const { return sum_w2 > 0 ? sum_w * sum_w / sum_w2 : 0.0; }
  // Standard error of logit(p_hat); empty for degenerate cells.
  std::optional<double> se_logit() const;
};

// One independent cell: weighted proportion plus its confidence interval.
EstimateCell estimate_cell(std::span<const double> y, std::span<const double> w,
                           double level = 0.95);

// Optional splits applied within every (grouping, week).
struct FactorSpec {
  std::optional<AgeBands> age_bands;              // needs `participants`
  const ParticipantTable* participants = nullptr;
  std::string location;  // when set, every cell is tagged with this location
};

// Weekly estimates per grouping and factor combination. `weights` is aligned
// with the response rows; NaN marks rows that are not part of the analysis
// sample (for example non-consistent or out-of-scope responses). Each cell is
// fitted independently; empty cells are skipped. Output is ordered by
// grouping (input order), week, then factor value.
std::vector<EstimateCell> estimate_by(const ResponseTable& responses,
                                      std::span<const OnsetTable> onsets,
                                      std::span<const double> weights,
                                      const FactorSpec& factors, double level = 0.95);

struct GroupComparison {
  EstimateCell a;
  EstimateCell b;
  std::optional<double> z;        // empty when indeterminate
  std::optional<double> p_value;
  bool significant = false;

  bool indeterminate() const { return !z.has_value(); }
};

// Two-sided Wald test of logit(p_a) = logit(p_b) for disjoint samples.
GroupComparison compare_groups(const EstimateCell& a, const EstimateCell& b,
                               double alpha = 0.05);

// Pairs cells with the same (grouping, week, factor value) from two location
// runs and compares each pair.
std::vector<GroupComparison> compare_cells(std::span<const EstimateCell> a,
                                           std::span<const EstimateCell> b,
                                           double alpha = 0.05);

struct AdjustmentRow {
  std::string grouping;
  SurveyWeek week;
  std::optional<double> naive;            // all responses, unweighted
  std::optional<double> consistent_only;
  std::optional<double> weighted_only;
  std::optional<double> both;
  // (adjusted - naive) / naive; empty unless naive > 0
  std::optional<double> rel_consistent_only;
  std::optional<double> rel_weighted_only;
  std::optional<double> rel_both;
};

// Four weekly series per grouping (naive, consistent-only, weighted-only,
// consistent and weighted) over the responses in `weighting.scope`, with
// the relative change of each adjusted series against the naive one.
std::vector<AdjustmentRow> adjustment_effect(const ResponseTable& responses,
                                             const ParticipantTable& participants,
                                             const ReferencePopulation& reference,
                                             const ConsistencyParams& params,
                                             const WeightingConfig& weighting,
                                             std::span<const SymptomGrouping> groupings);

// Mask of rows whose participant belongs to `scope` (national: all rows).
std::vector<std::uint8_t> scope_mask(const ResponseTable& responses,
                                     const ParticipantTable& participants,
                                     const Scope& scope);

// Unit weights on masked rows, NaN elsewhere.
std::vector<double> unit_weights(std::span<const std::uint8_t> mask);

void write_estimates(std::ostream& out, std::span<const EstimateCell> cells);
void write_comparisons(std::ostream& out, std::span<const GroupComparison> comparisons);
void write_adjustment_effect(std::ostream& out, std::span<const AdjustmentRow> rows);

}  // namespace flusurv
