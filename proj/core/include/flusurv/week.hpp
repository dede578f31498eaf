#pragma once

#include <chrono>
#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace flusurv {

// An epidemiological survey week, identified by the Sunday that ends it.
//
// Weeks are stored as a global ordinal: index 0 is the week ending Sunday
// 1970-01-04, and consecutive weeks differ by exactly one. Ordering and
// differences of indices therefore agree with calendar order.
class SurveyWeek {
 public:
  constexpr SurveyWeek() = default;

  static constexpr SurveyWeek from_index(std::int32_t index) {
    SurveyWeek w;
    w.index_ = index;
    return w;
  }

  // Throws ParseError if `date` is not a Sunday.
  static SurveyWeek from_date(std::chrono::year_month_day date);

  // Parses `YYYY-MM-DD`; the date must be a valid Sunday. Throws ParseError.
  static SurveyWeek parse(std::string_view iso_date);

  constexpr std::int32_t index() const { return index_; }
  std::chrono::sys_days ending_date() const;
  std::string iso() const;

  constexpr SurveyWeek operator+(std::int32_t weeks) const {
    return from_index(index_ + weeks);
  }
  constexpr SurveyWeek operator-(std::int32_t weeks) const {
    return from_index(index_ - weeks);
  }
  constexpr std::int32_t operator-(SurveyWeek other) const {
    return index_ - other.index_;
  }

  friend constexpr auto operator<=>(SurveyWeek, SurveyWeek) = default;

 private:
  std::int32_t index_ = 0;
};

// Closed, contiguous range of survey weeks. An empty range has count() == 0.
struct WeekRange {
  SurveyWeek first;
  SurveyWeek last;
  bool empty = true;

  static WeekRange closed(SurveyWeek a, SurveyWeek b) { return {a, b, false}; }

  std::size_t count() const {
    return empty ? 0 : static_cast<std::size_t>(last - first + 1);
  }
  bool contains(SurveyWeek w) const { return !empty && first <= w && w <= last; }
  // Position of `w` within the range; `w` must be contained.
  std::size_t offset(SurveyWeek w) const {
    return static_cast<std::size_t>(w - first);
  }
  SurveyWeek at(std::size_t offset) const {
    return first + static_cast<std::int32_t>(offset);
  }

  friend bool operator==(const WeekRange&, const WeekRange&) = default;
};

}  // namespace flusurv
