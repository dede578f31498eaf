#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "flusurv/week.hpp"

namespace flusurv {

enum class Symptom : std::uint8_t {
  kCough = 0,
  kFever,
  kSoreThroat,
  kShortnessOfBreath,
  kRunnyNose,
  kLossOfTasteOrSmell,
};

inline constexpr std::size_t kSymptomCount = 6;

// Column names in responses.csv, indexed by Symptom.
inline constexpr std::array<std::string_view, kSymptomCount> kSymptomColumns = {
    "cough",      "fever",     "sore_throat", "shortness_of_breath",
    "runny_nose", "loss_taste_smell"};

class SymptomSet {
 public:
  constexpr SymptomSet() = default;
  static constexpr SymptomSet from_bits(std::uint8_t bits) {
    SymptomSet s;
    s.bits_ = static_cast<std::uint8_t>(bits & 0x3f);
    return s;
  }
  static constexpr SymptomSet of(std::initializer_list<Symptom> symptoms) {
    SymptomSet s;
    for (auto sym : symptoms) s.set(sym);
    return s;
  }

  constexpr bool has(Symptom s) const {
    return (bits_ >> static_cast<unsigned>(s)) & 1u;
  }
  constexpr void set(Symptom s, bool on = true) {
    const auto mask = static_cast<std::uint8_t>(1u << static_cast<unsigned>(s));
    bits_ = on ? static_cast<std::uint8_t>(bits_ | mask)
               : static_cast<std::uint8_t>(bits_ & ~mask);
  }
  constexpr int count() const { return __builtin_popcount(bits_); }
  constexpr bool any() const { return bits_ != 0; }
  constexpr std::uint8_t bits() const { return bits_; }

  friend constexpr bool operator==(SymptomSet, SymptomSet) = default;

 private:
  std::uint8_t bits_ = 0;
};

struct ResponseRecord {
  std::string participant_id;
  SurveyWeek week;
  SymptomSet symptoms;

  friend bool operator==(const ResponseRecord&, const ResponseRecord&) = default;
};

// Immutable table of responses sorted by (participant_id, week), with at most
// one record per participant-week. The week universe is a closed range that
// always covers every record; a missing record means "no response".
class ResponseTable {
 public:
  ResponseTable() = default;

  // Sorts and validates. Throws ValidationError on a duplicate
  // (participant, week). When `universe` is given it must cover every record.
  static ResponseTable from_records(std::vector<ResponseRecord> records,
                                    std::optional<WeekRange> universe = {});

  std::span<const ResponseRecord> records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const ResponseRecord& operator[](std::size_t i) const { return records_[i]; }
  const WeekRange& weeks() const { return weeks_; }

  std::size_t participant_count() const {
    return starts_.empty() ? 0 : starts_.size() - 1;
  }
  // Row range [begin, end) of the k-th participant (in id order).
  std::size_t history_begin(std::size_t k) const { return starts_[k]; }
  std::size_t history_end(std::size_t k) const { return starts_[k + 1]; }
  std::span<const ResponseRecord> history(std::size_t k) const {
    return std::span(records_).subspan(starts_[k], starts_[k + 1] - starts_[k]);
  }

  // Rows whose flag is non-zero, keeping this table's week universe.
  ResponseTable subset(std::span<const std::uint8_t> keep) const;

 private:
  std::vector<ResponseRecord> records_;
  std::vector<std::size_t> starts_;
  WeekRange weeks_;
};

struct Participant {
  std::string participant_id;
  std::optional<int> age_years;
  std::string gender;
  std::string ethnicity;
  std::optional<std::string> region;
  std::optional<std::string> postcode;

  friend bool operator==(const Participant&, const Participant&) = default;
};

class ParticipantTable {
 public:
  ParticipantTable() = default;

  // Throws ValidationError for duplicate ids or ages outside [0, 120].
  static ParticipantTable from_participants(std::vector<Participant> people);

  const Participant* find(std::string_view participant_id) const;
  std::span<const Participant> all() const { return people_; }
  std::size_t size() const { return people_.size(); }

 private:
  std::vector<Participant> people_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Closed age interval [lower, upper] in whole years; no upper bound means an
// open top band such as "85+". Bounds are always aligned to 5-year groups.
struct AgeBand {
  int lower = 0;
  std::optional<int> upper;

  // Accepts "L-U" or "L+". Throws SchemaError unless L is a multiple of 5
  // and U + 1 is a multiple of 5 greater than L.
  static AgeBand parse(std::string_view label);

  std::string label() const;
  bool contains(int age) const {
    return age >= lower && (!upper || age <= *upper);
  }
  bool is_five_year_group() const { return !upper || *upper == lower + 4; }
  // True if `group` lies entirely inside this band.
  bool covers(const AgeBand& group) const;

  friend bool operator==(const AgeBand&, const AgeBand&) = default;
  friend auto operator<=>(const AgeBand& a, const AgeBand& b) {
    return a.lower <=> b.lower;
  }
};

// Ordered list of age bands partitioning [0, inf).
class AgeBands {
 public:
  AgeBands() = default;
  // Throws SchemaError if the bands do not partition [0, inf).
  explicit AgeBands(std::vector<AgeBand> bands);

  // Comma separated labels, e.g. "0-4,5-19,20-64,65+".
  static AgeBands parse(std::string_view list);
  // 0-4, 5-9, ..., (open_from)+.
  static AgeBands five_year(int open_from = 85);

  std::size_t size() const { return bands_.size(); }
  const AgeBand& operator[](std::size_t i) const { return bands_[i]; }
  std::span<const AgeBand> bands() const { return bands_; }
  std::optional<std::size_t> index_of(int age) const;

 private:
  std::vector<AgeBand> bands_;
};

class ReferencePopulation {
 public:
  struct Entry {
    std::string region;
    AgeBand group;  // always a 5-year group
    double count = 0;
  };

  ReferencePopulation() = default;
  // Throws SchemaError for non 5-year groups and ValidationError for negative
  // or non-finite counts and duplicate (region, group) pairs.
  static ReferencePopulation from_entries(std::vector<Entry> entries);

  std::span<const Entry> entries() const { return entries_; }
  std::vector<std::string> regions() const;
  bool has_region(std::string_view region) const;
  ReferencePopulation scaled(double factor) const;

 private:
  std::vector<Entry> entries_;
};

// --- CSV ingestion -------------------------------------------------------

// responses.csv: participant_id,week_ending,<six symptom flags>.
ResponseTable parse_responses(std::istream& source);
// participants.csv: participant_id,age,gender,ethnicity,region,postcode.
ParticipantTable parse_demographics(std::istream& source);
// reference_population.csv: region,age_group,count.
ReferencePopulation parse_reference_population(std::istream& source);

void write_responses(std::ostream& out, const ResponseTable& table);
void write_demographics(std::ostream& out, const ParticipantTable& table);
void write_reference_population(std::ostream& out,
                                const ReferencePopulation& reference);

// --- Descriptive summaries ----------------------------------------------

struct GroupSummary {
  std::string factor;  // age, ethnicity, gender, region
  std::string group;
  double responses_pct = 0;       // share of all responses in the period
  double responses_avg = 0;       // average weekly responses
  double consistent_pct = 0;
  double consistent_avg = 0;
  double participants_pct = 0;
  std::size_t participants = 0;   // unique participants
  double consistent_participants_pct = 0;
  std::size_t consistent_participants = 0;  // consistent in >= 1 week
};

struct WeeklyCount {
  SurveyWeek week;
  std::size_t responses = 0;
  std::size_t consistent = 0;
};

struct ResponseCountBin {
  std::size_t responses = 0;     // responses per participant over the period
  std::size_t participants = 0;
  double cumulative = 0;         // P(count <= responses)
};

struct DemographicSummary {
  std::vector<GroupSummary> groups;
  std::vector<WeeklyCount> weekly;
  std::vector<ResponseCountBin> per_participant;
  std::size_t total_participants = 0;
  std::size_t total_consistent_participants = 0;
  double avg_weekly_responses = 0;
  double avg_weekly_consistent = 0;
  std::vector<std::string> warnings;
};

// Label of the Table-1 style age decade for `age` ("0-9", ..., "80+").
std::string age_decade(int age);

// `consistent`, when given, is aligned with `responses` rows. Participants in
// `participants` that never responded still count as unique participants.
// Responses from unknown participants are grouped under "unknown" and
// reported in `warnings`.
DemographicSummary summarize_demographics(
    const ResponseTable& responses, const ParticipantTable& participants,
    std::optional<std::span<const std::uint8_t>> consistent = std::nullopt);

void write_summary(std::ostream& out, const DemographicSummary& summary);
void write_weekly_counts(std::ostream& out, const DemographicSummary& summary);
void write_responses_per_person(std::ostream& out,
                                const DemographicSummary& summary);

}  // namespace flusurv
