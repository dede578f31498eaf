#include "flusurv/consistency.hpp"

#include <algorithm>
#include <numeric>

#include "flusurv/csv.hpp"
#include "flusurv/errors.hpp"

namespace flusurv {

void ConsistencyParams::validate() const {
  if (window < 1) throw ConfigError("consistency window must be >= 1");
  if (missing < 0 || missing >= window) {
    throw ConfigError("missing weeks allowed must satisfy 0 <= missing < window");
  }
}

std::size_t ConsistencyMark::count() const {
  return static_cast<std::size_t>(
      std::count(consistent.begin(), consistent.end(), std::uint8_t{1}));
}

bool in_warmup(SurveyWeek week, const ConsistencyParams& params,
               const WeekRange& universe) {
  return universe.empty || week - universe.first < params.window;
}

bool is_consistent(std::span<const ResponseRecord> history, SurveyWeek week,
                   const ConsistencyParams& params, const WeekRange& universe) {
  params.validate();
  const auto by_week = [](const ResponseRecord& r, SurveyWeek w) { return r.week < w; };
  const auto at = std::lower_bound(history.begin(), history.end(), week, by_week);
  if (at == history.end() || at->week != week) {
    throw ContractViolation("no response at " + week.iso());
  }
  if (params.warmup == WarmupPolicy::kStrict && in_warmup(week, params, universe)) {
    return false;
  }
  const auto from =
      std::lower_bound(history.begin(), at, week - params.window, by_week);
  return at - from >= params.required();
}

ConsistencyMark mark_consistency(const ResponseTable& responses,
                                 const ConsistencyParams& params) {
  params.validate();
  ConsistencyMark marks{params, std::vector<std::uint8_t>(responses.size(), 0)};
  const auto& universe = responses.weeks();
  for (std::size_t k = 0; k < responses.participant_count(); ++k) {
    const std::size_t begin = responses.history_begin(k);
    const std::size_t end = responses.history_end(k);
    std::size_t left = begin;
    for (std::size_t j = begin; j < end; ++j) {
      const SurveyWeek week = responses[j].week;
      while (responses[left].week < week - params.window) ++left;
      const bool warm = params.warmup == WarmupPolicy::kStrict &&
                        in_warmup(week, params, universe);
      marks.consistent[j] =
          !warm && static_cast<int>(j - left) >= params.required();
    }
  }
  return marks;
}

std::pair<ResponseTable, ConsistencyMark> consistent_subset(
    const ResponseTable& responses, const ConsistencyParams& params) {
  auto marks = mark_consistency(responses, params);
  auto subset = responses.subset(marks.consistent);
  return {std::move(subset), std::move(marks)};
}

std::vector<ExclusionFraction> fraction_excluded(const ResponseTable& responses,
                                                 const ConsistencyMark& marks) {
  if (marks.consistent.size() != responses.size()) {
    throw ContractViolation("consistency marks do not match response table");
  }
  const auto& weeks = responses.weeks();
  std::vector<ExclusionFraction> out(weeks.count());
  for (std::size_t i = 0; i < out.size(); ++i) out[i].week = weeks.at(i);
  for (std::size_t i = 0; i < responses.size(); ++i) {
    auto& f = out[weeks.offset(responses[i].week)];
    ++f.responses;
    if (marks.consistent[i]) ++f.consistent;
  }
  for (auto& f : out) {
    if (f.responses > 0) {
      f.fraction = 1.0 - static_cast<double>(f.consistent) /
                             static_cast<double>(f.responses);
    }
  }
  return out;
}

std::vector<ExclusionFraction> fraction_excluded(const ResponseTable& responses,
                                                 const ConsistencyParams& params) {
  return fraction_excluded(responses, mark_consistency(responses, params));
}

void write_consistency_marks(std::ostream& out, const ResponseTable& responses,
                             const ConsistencyMark& marks) {
  out << csv::kSchemaLine << '\n';
  csv::write_row(out, {"participant_id", "week_ending", "consistent"});
  for (std::size_t i = 0; i < responses.size(); ++i) {
    csv::write_row(out, {responses[i].participant_id, responses[i].week.iso(),
                         marks.consistent[i] ? "1" : "0"});
  }
}

}  // namespace flusurv
