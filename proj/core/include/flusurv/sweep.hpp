#pragma once

#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "flusurv/consistency.hpp"
#include "flusurv/incidents.hpp"
#include "flusurv/raking.hpp"
#include "flusurv/stats.hpp"

namespace flusurv {

struct SweepWeek {
  SurveyWeek week;
  std::optional<double> fraction_excluded;
  std::optional<double> baseline;         // all responses, unweighted
  std::optional<double> filtered;         // consistent subset
  std::optional<double> relative_change;  // (filtered - baseline) / baseline
};

struct SweepSummary {
  std::size_t weeks = 0;
  stats::BoxSummary fraction_excluded;
  stats::BoxSummary relative_change;
};

struct SweepSeries {
  int window = 0;
  int missing = 0;
  std::string grouping;
  std::vector<SweepWeek> weeks;
  SweepSummary all_weeks;       // before the exclusion filter
  SweepSummary filtered_weeks;  // after dropping high-exclusion weeks
};

struct SweepWeighting {
  const ParticipantTable* participants = nullptr;
  const ReferencePopulation* reference = nullptr;
  WeightingConfig config;
};

struct SweepOptions {
  std::vector<int> windows = {1, 2, 3, 4, 5, 6, 7, 8};
  std::vector<int> missing = {0, 1, 2};
  double exclusion_threshold = 0.25;
  WarmupPolicy warmup = WarmupPolicy::kStrict;
  // Rake the consistent subset before estimating; off isolates the filter.
  std::optional<SweepWeighting> weighting;
};

struct SweepResult {
  std::vector<SweepSeries> series;  // ordered by (window, missing, grouping)
  std::vector<std::string> warnings;
};

// Evaluates every valid (window, missing) grid point; points with
// missing >= window are skipped with a warning.
SweepResult run_sweep(const ResponseTable& responses,
                      std::span<const SymptomGrouping> groupings,
                      const SweepOptions& options);

// Drops weeks whose excluded fraction is above `threshold` or undefined.
std::vector<SweepWeek> filter_high_exclusion_weeks(std::span<const SweepWeek> series,
                                                   double threshold = 0.25);

SweepSummary summarize_sweep(std::span<const SweepWeek> weeks);

void write_sweep_weekly(std::ostream& out, const SweepResult& result,
                        double threshold);
void write_sweep_summary(std::ostream& out, const SweepResult& result);

}  // namespace flusurv
