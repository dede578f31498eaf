#include "flusurv/week.hpp"

#include <charconv>
#include <cstdio>

#include "flusurv/errors.hpp"

namespace flusurv {
namespace {

// 1970-01-04 is the first Sunday after the epoch.
constexpr std::int64_t kFirstSundayDays = 3;

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

bool parse_int(std::string_view text, int& out) {
  if (text.empty()) return false;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc{} && ptr == text.data() + text.size();
}

}  // namespace

SurveyWeek SurveyWeek::from_date(std::chrono::year_month_day date) {
  using namespace std::chrono;
  if (!date.ok()) throw ParseError("invalid calendar date", 0);
  const sys_days days{date};
  if (weekday{days} != Sunday) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u",
                  static_cast<int>(date.year()),
                  static_cast<unsigned>(date.month()),
                  static_cast<unsigned>(date.day()));
    throw ParseError(std::string("week_ending ") + buf + " is not a Sunday", 0);
  }
  const std::int64_t n = days.time_since_epoch().count() - kFirstSundayDays;
  return from_index(static_cast<std::int32_t>(floor_div(n, 7)));
}

SurveyWeek SurveyWeek::parse(std::string_view iso_date) {
  using namespace std::chrono;
  int y = 0, m = 0, d = 0;
  if (iso_date.size() != 10 || iso_date[4] != '-' || iso_date[7] != '-' ||
      !parse_int(iso_date.substr(0, 4), y) ||
      !parse_int(iso_date.substr(5, 2), m) ||
      !parse_int(iso_date.substr(8, 2), d)) {
    throw ParseError("malformed ISO-8601 date '" + std::string(iso_date) + "'",
                     0);
  }
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(m)},
                           day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) {
    throw ParseError("invalid calendar date '" + std::string(iso_date) + "'",
                     0);
  }
  return from_date(ymd);
}

std::chrono::sys_days SurveyWeek::ending_date() const {
  return std::chrono::sys_days{
      std::chrono::days{kFirstSundayDays + 7 * std::int64_t{index_}}};
}

std::string SurveyWeek::iso() const {
  const std::chrono::year_month_day ymd{ending_date()};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()));
  return buf;
}

}  // namespace flusurv
