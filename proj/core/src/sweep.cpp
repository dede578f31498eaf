#include "flusurv/sweep.hpp"

#include <future>
#include <map>

#include <spdlog/spdlog.h>

#include "flusurv/csv.hpp"
#include "flusurv/estimation.hpp"

namespace flusurv {
namespace {

using WeekSeries = std::map<std::pair<std::string, SurveyWeek>, double>;

WeekSeries proportions(const std::vector<EstimateCell>& cells) {
  WeekSeries out;
  for (const auto& c : cells) out[{c.grouping, c.week}] = c.p_hat;
  return out;
}

std::vector<SweepSeries> evaluate_point(const ResponseTable& responses,
                                        std::span<const SymptomGrouping> groupings,
                                        const std::vector<OnsetTable>& onsets,
                                        const WeekSeries& baseline,
                                        const ConsistencyParams& params,
                                        const SweepOptions& options) {
  const auto marks = mark_consistency(responses, params);
  const auto excluded = fraction_excluded(responses, marks);

  std::vector<double> weights;
  if (options.weighting) {
    const auto& wt = *options.weighting;
    const auto tables = weights_by_week(responses, marks.consistent, *wt.participants,
                                        *wt.reference, wt.config);
    weights = response_weights(responses.size(), tables);
  } else {
    weights = unit_weights(marks.consistent);
  }
  const auto filtered = proportions(estimate_by(responses, onsets, weights, FactorSpec{}));

  std::vector<SweepSeries> out;
  for (const auto& g : groupings) {
    SweepSeries s;
    s.window = params.window;
    s.missing = params.missing;
    s.grouping = g.name;
    for (const auto& ex : excluded) {
      SweepWeek w;
      w.week = ex.week;
      w.fraction_excluded = ex.fraction;
      if (auto it = baseline.find({g.name, ex.week}); it != baseline.end()) {
        w.baseline = it->second;
      }
      if (auto it = filtered.find({g.name, ex.week}); it != filtered.end()) {
        w.filtered = it->second;
      }
      if (w.baseline && w.filtered && *w.baseline > 0) {
        w.relative_change = (*w.filtered - *w.baseline) / *w.baseline;
      }
      s.weeks.push_back(w);
    }
    s.all_weeks = summarize_sweep(s.weeks);
    s.filtered_weeks = summarize_sweep(
        filter_high_exclusion_weeks(s.weeks, options.exclusion_threshold));
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

std::vector<SweepWeek> filter_high_exclusion_weeks(std::span<const SweepWeek> series,
                                                   double threshold) {
  std::vector<SweepWeek> kept;
  for (const auto& w : series) {
    if (w.fraction_excluded && *w.fraction_excluded <= threshold) kept.push_back(w);
  }
  if (kept.empty() && !series.empty()) {
    spdlog::debug("every week exceeds the exclusion threshold {}", threshold);
  }
  return kept;
}

SweepSummary summarize_sweep(std::span<const SweepWeek> weeks) {
  std::vector<double> fractions, changes;
  for (const auto& w : weeks) {
    if (w.fraction_excluded) fractions.push_back(*w.fraction_excluded);
    if (w.relative_change) changes.push_back(*w.relative_change);
  }
  SweepSummary s;
  s.weeks = weeks.size();
  s.fraction_excluded = stats::box_summary(std::move(fractions));
  s.relative_change = stats::box_summary(std::move(changes));
  return s;
}

SweepResult run_sweep(const ResponseTable& responses,
                      std::span<const SymptomGrouping> groupings,
                      const SweepOptions& options) {
  SweepResult result;
  std::vector<OnsetTable> onsets;
  for (const auto& g : groupings) onsets.push_back(mark_onsets(responses, g));
  const std::vector<std::uint8_t> all(responses.size(), 1);
  const auto baseline =
      proportions(estimate_by(responses, onsets, unit_weights(all), FactorSpec{}));

  std::vector<ConsistencyParams> grid;
  for (int w : options.windows) {
    for (int m : options.missing) {
      ConsistencyParams p{w, m, options.warmup};
      if (w < 1 || m < 0 || m >= w) {
        result.warnings.push_back("skipping invalid grid point W=" + std::to_string(w) +
                                  ", M=" + std::to_string(m));
        continue;
      }
      grid.push_back(p);
    }
  }

  std::vector<std::future<std::vector<SweepSeries>>> jobs;
  jobs.reserve(grid.size());
  for (const auto& p : grid) {
    jobs.push_back(std::async(std::launch::async, [&, p] {
      return evaluate_point(responses, groupings, onsets, baseline, p, options);
    }));
  }
  for (auto& job : jobs) {
    for (auto& s : job.get()) result.series.push_back(std::move(s));
  }
  std::size_t emptied = 0;
  for (const auto& s : result.series) emptied += !s.weeks.empty() && s.filtered_weeks.weeks == 0;
  if (emptied > 0) {
    result.warnings.push_back(fmt::format(
        "{} series have every week above the exclusion threshold {}; filtered summaries are empty",
        emptied, options.exclusion_threshold));
  }
  for (const auto& w : result.warnings) spdlog::warn("{}", w);
  return result;
}

namespace {

std::string opt(const std::optional<double>& v) {
  return v ? csv::format_number(*v) : "NA";
}

void append_box(std::vector<std::string>& row, const stats::BoxSummary& b) {
  if (b.count == 0) {
    row.insert(row.end(), 5, "NA");
    return;
  }
  for (double v : {b.min, b.q1, b.median, b.q3, b.max}) {
    row.push_back(csv::format_number(v));
  }
}

}  // namespace

void write_sweep_weekly(std::ostream& out, const SweepResult& result,
                        double threshold) {
  out << csv::kSchemaLine << '\n';
  csv::write_row(out, {"window", "missing", "grouping", "week_ending",
                       "fraction_excluded", "baseline", "filtered",
                       "relative_change", "kept"});
  for (const auto& s : result.series) {
    for (const auto& w : s.weeks) {
      const bool kept = w.fraction_excluded && *w.fraction_excluded <= threshold;
      csv::write_row(out, {std::to_string(s.window), std::to_string(s.missing),
                           s.grouping, w.week.iso(), opt(w.fraction_excluded),
                           opt(w.baseline), opt(w.filtered), opt(w.relative_change),
                           kept ? "1" : "0"});
    }
  }
}

void write_sweep_summary(std::ostream& out, const SweepResult& result) {
  out << csv::kSchemaLine << '\n';
  csv::write_row(out, {"window", "missing", "grouping", "weeks_used", "weeks",
                       "fraction_min", "fraction_q1", "fraction_median",
                       "fraction_q3", "fraction_max", "relchange_min",
                       "relchange_q1", "relchange_median", "relchange_q3",
                       "relchange_max"});
  for (const auto& s : result.series) {
    for (const auto* which : {"all", "filtered"}) {
      const auto& sum = std::string_view(which) == "all" ? s.all_weeks : s.filtered_weeks;
      std::vector<std::string> row = {std::to_string(s.window), std::to_string(s.missing),
                                      s.grouping, which, std::to_string(sum.weeks)};
      append_box(row, sum.fraction_excluded);
      append_box(row, sum.relative_change);
      csv::write_row(out, row);
    }
  }
}

}  // namespace flusurv
