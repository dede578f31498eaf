#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <utility>
#include <vector>

#include "flusurv/survey_data.hpp"

namespace flusurv {

// How weeks near the start of the dataset are treated.
enum class WarmupPolicy {
  // Any week with fewer than `window` dataset weeks before it is marked not
  // consistent.
  kStrict,
  // Weeks before the dataset are non-responses; no special case.
  kPriorWeeksMissing,
};

// A response at week t is consistent when the participant responded in at
// least `window - missing` of the `window` weeks strictly before t.
struct ConsistencyParams {
  int window = 4;
  int missing = 1;
  WarmupPolicy warmup = WarmupPolicy::kStrict;

  // Throws ConfigError unless window >= 1 and 0 <= missing < window.
  void validate() const;
  int required() const { return window - missing; }
};

struct ConsistencyMark {
  ConsistencyParams params;
  std::vector<std::uint8_t> consistent;  // aligned with the response rows

  std::size_t count() const;
};

// Weeks whose window reaches before the start of the dataset.
bool in_warmup(SurveyWeek week, const ConsistencyParams& params,
               const WeekRange& universe);

// `history` is one participant's week-ordered records and must contain a
// response at `week` (ContractViolation otherwise).
bool is_consistent(std::span<const ResponseRecord> history, SurveyWeek week,
                   const ConsistencyParams& params, const WeekRange& universe);

ConsistencyMark mark_consistency(const ResponseTable& responses,
                                 const ConsistencyParams& params);

std::pair<ResponseTable, ConsistencyMark> consistent_subset(
    const ResponseTable& responses, const ConsistencyParams& params);

struct ExclusionFraction {
  SurveyWeek week;
  std::size_t responses = 0;
  std::size_t consistent = 0;
  std::optional<double> fraction;  // empty for weeks without responses
};

std::vector<ExclusionFraction> fraction_excluded(const ResponseTable& responses,
                                                 const ConsistencyMark& marks);
std::vector<ExclusionFraction> fraction_excluded(const ResponseTable& responses,
                                                 const ConsistencyParams& params);

// consistency_marks.csv: participant_id,week_ending,consistent
void write_consistency_marks(std::ostream& out, const ResponseTable& responses,
                             const ConsistencyMark& marks);

}  // namespace flusurv
