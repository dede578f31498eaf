#include "flusurv/survey_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <set>
#include <tuple>

#include <spdlog/spdlog.h>

#include "flusurv/csv.hpp"
#include "flusurv/errors.hpp"

namespace flusurv {
namespace {

constexpr std::string_view kParticipantId = "participant_id";
constexpr std::string_view kWeekEnding = "week_ending";

bool parse_int(std::string_view text, int& out) {
  if (text.empty()) return false;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc{} && ptr == text.data() + text.size();
}

bool parse_double(std::string_view text, double& out) {
  if (text.empty()) return false;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc{} && ptr == text.data() + text.size();
}

void check_width(const csv::Row& row, const csv::Header& header) {
  if (row.fields.size() != header.width()) {
    throw ParseError("expected " + std::to_string(header.width()) +
                         " fields, found " + std::to_string(row.fields.size()),
                     row.line);
  }
}

SurveyWeek parse_week_at(std::string_view text, std::size_t line) {
  try {
    return SurveyWeek::parse(text);
  } catch (const ParseError& e) {
    throw ParseError(e.what(), line);
  }
}

std::vector<std::string_view> response_columns() {
  std::vector<std::string_view> cols = {kParticipantId, kWeekEnding};
  cols.insert(cols.end(), kSymptomColumns.begin(), kSymptomColumns.end());
  return cols;
}

}  // namespace

// --- ResponseTable ------------------------------------------------------

ResponseTable ResponseTable::from_records(std::vector<ResponseRecord> records,
                                          std::optional<WeekRange> universe) {
  std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) {
    return std::tie(a.participant_id, a.week) < std::tie(b.participant_id, b.week);
  });
  ResponseTable table;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const bool new_participant =
        i == 0 || records[i].participant_id != records[i - 1].participant_id;
    if (!new_participant && records[i].week == records[i - 1].week) {
      throw ValidationError("duplicate response for (" +
                            records[i].participant_id + ", " +
                            records[i].week.iso() + ")");
    }
    if (new_participant) table.starts_.push_back(i);
  }
  table.starts_.push_back(records.size());
  if (records.empty()) table.starts_.clear();

  WeekRange range;
  if (!records.empty()) {
    auto [lo, hi] = std::minmax_element(
        records.begin(), records.end(),
        [](const auto& a, const auto& b) { return a.week < b.week; });
    range = WeekRange::closed(lo->week, hi->week);
  }
  if (universe && !universe->empty) {
    if (!range.empty &&
        (!universe->contains(range.first) || !universe->contains(range.last))) {
      throw ContractViolation("week universe does not cover every response");
    }
    range = *universe;
  }
  table.weeks_ = range;
  table.records_ = std::move(records);
  return table;
}

ResponseTable ResponseTable::subset(std::span<const std::uint8_t> keep) const {
  if (keep.size() != records_.size()) {
    throw ContractViolation("subset mask size does not match table");
  }
  std::vector<ResponseRecord> kept;
  for (std::size_t i = 0; i < records_.size(); ++i) {
    if (keep[i]) kept.push_back(records_[i]);
  }
  return from_records(std::move(kept), weeks_);
}

// --- ParticipantTable --------------------------------------------------

ParticipantTable ParticipantTable::from_participants(
    std::vector<Participant> people) {
  std::sort(people.begin(), people.end(), [](const auto& a, const auto& b) {
    return a.participant_id < b.participant_id;
  });
  ParticipantTable table;
  for (std::size_t i = 0; i < people.size(); ++i) {
    const auto& p = people[i];
    if (i > 0 && p.participant_id == people[i - 1].participant_id) {
      throw ValidationError("duplicate participant_id '" + p.participant_id + "'");
    }
    if (p.age_years && (*p.age_years < 0 || *p.age_years > 120)) {
      throw ValidationError("participant '" + p.participant_id +
                            "' has age outside [0, 120]");
    }
    table.index_.emplace(p.participant_id, i);
  }
  table.people_ = std::move(people);
  return table;
}

const Participant* ParticipantTable::find(std::string_view participant_id) const {
  auto it = index_.find(std::string(participant_id));
  return it == index_.end() ? nullptr : &people_[it->second];
}

// --- AgeBand / AgeBands -------------------------------------------------

AgeBand AgeBand::parse(std::string_view label) {
  AgeBand band;
  const auto fail = [&](const char* why) {
    return SchemaError("age band '" + std::string(label) + "': " + why);
  };
  if (!label.empty() && label.back() == '+') {
    if (!parse_int(label.substr(0, label.size() - 1), band.lower)) {
      throw fail("malformed");
    }
  } else {
    const auto dash = label.find('-');
    int upper = 0;
    if (dash == std::string_view::npos ||
        !parse_int(label.substr(0, dash), band.lower) ||
        !parse_int(label.substr(dash + 1), upper)) {
      throw fail("malformed");
    }
    band.upper = upper;
  }
  if (band.lower < 0 || band.lower % 5 != 0) {
    throw fail("lower bound is not a multiple of 5");
  }
  if (band.upper && (*band.upper < band.lower || (*band.upper + 1) % 5 != 0)) {
    throw fail("not a union of 5-year age groups");
  }
  return band;
}

std::string AgeBand::label() const {
  return upper ? std::to_string(lower) + "-" + std::to_string(*upper)
               : std::to_string(lower) + "+";
}

bool AgeBand::covers(const AgeBand& group) const {
  if (group.lower < lower) return false;
  if (!upper) return true;
  return group.upper && *group.upper <= *upper;
}

AgeBands::AgeBands(std::vector<AgeBand> bands) : bands_(std::move(bands)) {
  if (bands_.empty()) throw SchemaError("age bands must not be empty");
  std::sort(bands_.begin(), bands_.end());
  int expected = 0;
  for (std::size_t i = 0; i < bands_.size(); ++i) {
    const auto& b = bands_[i];
    if (b.lower != expected) {
      throw SchemaError("age bands do not partition [0, inf): gap or overlap at " +
                        std::to_string(expected));
    }
    if (!b.upper) {
      if (i + 1 != bands_.size()) {
        throw SchemaError("open-ended age band must be last");
      }
      return;
    }
    expected = *b.upper + 1;
  }
  throw SchemaError("age bands must end with an open-ended band (e.g. 85+)");
}

AgeBands AgeBands::parse(std::string_view list) {
  std::vector<AgeBand> bands;
  std::size_t start = 0;
  while (start <= list.size()) {
    auto end = list.find(',', start);
    if (end == std::string_view::npos) end = list.size();
    auto item = list.substr(start, end - start);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (!item.empty()) bands.push_back(AgeBand::parse(item));
    start = end + 1;
  }
  return AgeBands(std::move(bands));
}

AgeBands AgeBands::five_year(int open_from) {
  if (open_from <= 0 || open_from % 5 != 0) {
    throw SchemaError("open_from must be a positive multiple of 5");
  }
  std::vector<AgeBand> bands;
  for (int lo = 0; lo < open_from; lo += 5) bands.push_back({lo, lo + 4});
  bands.push_back({open_from, std::nullopt});
  return AgeBands(std::move(bands));
}

std::optional<std::size_t> AgeBands::index_of(int age) const {
  for (std::size_t i = 0; i < bands_.size(); ++i) {
    if (bands_[i].contains(age)) return i;
  }
  return std::nullopt;
}

// --- ReferencePopulation ------------------------------------------------

ReferencePopulation ReferencePopulation::from_entries(std::vector<Entry> entries) {
  for (const auto& e : entries) {
    if (!e.group.is_five_year_group()) {
      throw SchemaError("reference age group '" + e.group.label() +
                        "' is not a 5-year group");
    }
    if (!std::isfinite(e.count) || e.count < 0) {
      throw ValidationError("reference count for (" + e.region + ", " +
                            e.group.label() + ") must be a non-negative number");
    }
  }
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    return std::tie(a.region, a.group.lower) < std::tie(b.region, b.group.lower);
  });
  for (std::size_t i = 1; i < entries.size(); ++i) {
    if (entries[i].region == entries[i - 1].region &&
        entries[i].group.lower == entries[i - 1].group.lower) {
      throw ValidationError("duplicate reference entry (" + entries[i].region +
                            ", " + entries[i].group.label() + ")");
    }
  }
  ReferencePopulation ref;
  ref.entries_ = std::move(entries);
  return ref;
}

std::vector<std::string> ReferencePopulation::regions() const {
  std::vector<std::string> out;
  for (const auto& e : entries_) {
    if (out.empty() || out.back() != e.region) out.push_back(e.region);
  }
  return out;
}

bool ReferencePopulation::has_region(std::string_view region) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const Entry& e) { return e.region == region; });
}

ReferencePopulation ReferencePopulation::scaled(double factor) const {
  ReferencePopulation out = *this;
  for (auto& e : out.entries_) e.count *= factor;
  return out;
}

// --- Parsing ------------------------------------------------------------

ResponseTable parse_responses(std::istream& source) {
  csv::Reader reader(source);
  auto header_row = reader.next();
  if (!header_row) throw SchemaError("responses: missing header row");
  const csv::Header header(*header_row, response_columns());

  struct Located {
    ResponseRecord record;
    std::size_t line;
  };
  std::vector<Located> rows;
  while (auto row = reader.next()) {
    check_width(*row, header);
    Located loc{{}, row->line};
    loc.record.participant_id = row->fields[header[kParticipantId]];
    if (loc.record.participant_id.empty()) {
      throw ParseError("empty participant_id", row->line);
    }
    loc.record.week = parse_week_at(row->fields[header[kWeekEnding]], row->line);
    for (std::size_t s = 0; s < kSymptomCount; ++s) {
      const auto& flag = row->fields[header[kSymptomColumns[s]]];
      if (flag != "0" && flag != "1") {
        throw ParseError("symptom flag '" + std::string(kSymptomColumns[s]) +
                             "' must be 0 or 1, got '" + flag + "'",
                         row->line);
      }
      loc.record.symptoms.set(static_cast<Symptom>(s), flag == "1");
    }
    rows.push_back(std::move(loc));
  }

  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    return std::tie(a.record.participant_id, a.record.week) <
           std::tie(b.record.participant_id, b.record.week);
  });
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& a = rows[i - 1];
    const auto& b = rows[i];
    if (a.record.participant_id == b.record.participant_id &&
        a.record.week == b.record.week) {
      throw ValidationError("duplicate response for (" + b.record.participant_id +
                            ", " + b.record.week.iso() + ") on lines " +
                            std::to_string(a.line) + " and " +
                            std::to_string(b.line));
    }
  }
  std::vector<ResponseRecord> records;
  records.reserve(rows.size());
  for (auto& r : rows) records.push_back(std::move(r.record));
  return ResponseTable::from_records(std::move(records));
}

ParticipantTable parse_demographics(std::istream& source) {
  csv::Reader reader(source);
  auto header_row = reader.next();
  if (!header_row) throw SchemaError("participants: missing header row");
  const csv::Header header(
      *header_row, {kParticipantId, "age", "gender", "ethnicity", "region"},
      {"postcode"});

  std::vector<Participant> people;
  std::map<std::string, std::size_t> seen;
  while (auto row = reader.next()) {
    check_width(*row, header);
    const auto& f = row->fields;
    Participant p;
    p.participant_id = f[header[kParticipantId]];
    if (p.participant_id.empty()) throw ParseError("empty participant_id", row->line);
    if (auto [it, fresh] = seen.emplace(p.participant_id, row->line); !fresh) {
      throw ValidationError("duplicate participant_id '" + p.participant_id +
                            "' on lines " + std::to_string(it->second) + " and " +
                            std::to_string(row->line));
    }
    const auto& age = f[header["age"]];
    if (!age.empty()) {
      int years = 0;
      if (!parse_int(age, years)) {
        throw ParseError("age '" + age + "' is not an integer", row->line);
      }
      if (years < 0 || years > 120) {
        throw ValidationError("line " + std::to_string(row->line) + ": age " +
                              age + " outside [0, 120]");
      }
      p.age_years = years;
    }
    p.gender = f[header["gender"]];
    p.ethnicity = f[header["ethnicity"]];
    if (const auto& region = f[header["region"]]; !region.empty()) p.region = region;
    if (header.has("postcode")) {
      if (const auto& pc = f[header["postcode"]]; !pc.empty()) p.postcode = pc;
    }
    people.push_back(std::move(p));
  }
  return ParticipantTable::from_participants(std::move(people));
}

ReferencePopulation parse_reference_population(std::istream& source) {
  csv::Reader reader(source);
  auto header_row = reader.next();
  if (!header_row) throw SchemaError("reference population: missing header row");
  const csv::Header header(*header_row, {"region", "age_group", "count"});

  std::vector<ReferencePopulation::Entry> entries;
  while (auto row = reader.next()) {
    check_width(*row, header);
    ReferencePopulation::Entry e;
    e.region = row->fields[header["region"]];
    if (e.region.empty()) throw ParseError("empty region", row->line);
    try {
      e.group = AgeBand::parse(row->fields[header["age_group"]]);
    } catch (const SchemaError& err) {
      throw SchemaError("line " + std::to_string(row->line) + ": " + err.what());
    }
    if (!e.group.is_five_year_group()) {
      throw SchemaError("line " + std::to_string(row->line) + ": age group '" +
                        e.group.label() + "' is not a 5-year group");
    }
    const auto& count = row->fields[header["count"]];
    if (!parse_double(count, e.count)) {
      throw ParseError("count '" + count + "' is not a number", row->line);
    }
    if (!std::isfinite(e.count) || e.count < 0) {
      throw ValidationError("line " + std::to_string(row->line) +
                            ": negative reference count");
    }
    entries.push_back(std::move(e));
  }
  return ReferencePopulation::from_entries(std::move(entries));
}

// --- Writing ------------------------------------------------------------

void write_responses(std::ostream& out, const ResponseTable& table) {
  out << csv::kSchemaLine << '\n';
  std::vector<std::string> header;
  for (auto c : response_columns()) header.emplace_back(c);
  csv::write_row(out, header);
  for (const auto& r : table.records()) {
    std::vector<std::string> row = {r.participant_id, r.week.iso()};
    for (std::size_t s = 0; s < kSymptomCount; ++s) {
      row.push_back(r.symptoms.has(static_cast<Symptom>(s)) ? "1" : "0");
    }
    csv::write_row(out, row);
  }
}

void write_demographics(std::ostream& out, const ParticipantTable& table) {
  out << csv::kSchemaLine << '\n';
  csv::write_row(out, {"participant_id", "age", "gender", "ethnicity", "region",
                       "postcode"});
  for (const auto& p : table.all()) {
    csv::write_row(out, {p.participant_id,
                         p.age_years ? std::to_string(*p.age_years) : "",
                         p.gender, p.ethnicity, p.region.value_or(""),
                         p.postcode.value_or("")});
  }
}

void write_reference_population(std::ostream& out,
                                const ReferencePopulation& reference) {
  out << csv::kSchemaLine << '\n';
  csv::write_row(out, {"region", "age_group", "count"});
  for (const auto& e : reference.entries()) {
    csv::write_row(out, {e.region, e.group.label(), csv::format_number(e.count)});
  }
}

// --- Summaries ----------------------------------------------------------

std::string age_decade(int age) {
  if (age >= 80) return "80+";
  const int lo = age / 10 * 10;
  return std::to_string(lo) + "-" + std::to_string(lo + 9);
}

namespace {

constexpr std::string_view kUnknown = "unknown";

struct Tally {
  std::size_t responses = 0;
  std::size_t consistent = 0;
  std::set<std::string> participants;
  std::set<std::string> consistent_participants;
};

std::string or_unknown(const std::string& value) {
  return value.empty() ? std::string(kUnknown) : value;
}

std::array<std::string, 4> factor_values(const Participant* p) {
  if (!p) {
    return {std::string(kUnknown), std::string(kUnknown), std::string(kUnknown),
            std::string(kUnknown)};
  }
  return {p->age_years ? age_decade(*p->age_years) : std::string(kUnknown),
          or_unknown(p->ethnicity), or_unknown(p->gender),
          p->region ? *p->region : std::string(kUnknown)};
}

// Age decades sort numerically, everything else lexicographically with
// "unknown" last.
bool group_less(const std::string& factor, const std::string& a,
                const std::string& b) {
  if (a == kUnknown || b == kUnknown) return b == kUnknown && a != kUnknown;
  if (factor == "age") {
    int la = 0, lb = 0;
    std::from_chars(a.data(), a.data() + a.size(), la);
    std::from_chars(b.data(), b.data() + b.size(), lb);
    return la < lb;
  }
  return a < b;
}

double pct(double part, double whole) { return whole > 0 ? 100.0 * part / whole : 0.0; }

}  // namespace

DemographicSummary summarize_demographics(
    const ResponseTable& responses, const ParticipantTable& participants,
    std::optional<std::span<const std::uint8_t>> consistent) {
  if (consistent && consistent->size() != responses.size()) {
    throw ContractViolation("consistency flags do not match response table");
  }
  static constexpr std::array<std::string_view, 4> kFactors = {
      "age", "ethnicity", "gender", "region"};

  DemographicSummary summary;
  const auto& weeks = responses.weeks();
  const std::size_t n_weeks = weeks.count();
  summary.weekly.resize(n_weeks);
  for (std::size_t i = 0; i < n_weeks; ++i) summary.weekly[i].week = weeks.at(i);

  std::array<std::map<std::string, Tally>, 4> tallies;
  std::map<std::string, std::size_t> per_person;
  std::set<std::string> consistent_people;
  std::set<std::string> unknown_ids;
  std::size_t total_responses = 0, total_consistent = 0;

  for (const auto& p : participants.all()) {
    per_person.emplace(p.participant_id, 0);
    const auto values = factor_values(&p);
    for (std::size_t f = 0; f < kFactors.size(); ++f) {
      tallies[f][values[f]].participants.insert(p.participant_id);
    }
  }

  for (std::size_t i = 0; i < responses.size(); ++i) {
    const auto& r = responses[i];
    const Participant* p = participants.find(r.participant_id);
    if (!p) unknown_ids.insert(r.participant_id);
    const bool is_consistent = consistent && (*consistent)[i];
    const auto values = factor_values(p);
    for (std::size_t f = 0; f < kFactors.size(); ++f) {
      auto& t = tallies[f][values[f]];
      ++t.responses;
      t.participants.insert(r.participant_id);
      if (is_consistent) {
        ++t.consistent;
        t.consistent_participants.insert(r.participant_id);
      }
    }
    ++per_person[r.participant_id];
    ++total_responses;
    auto& wk = summary.weekly[weeks.offset(r.week)];
    ++wk.responses;
    if (is_consistent) {
      ++wk.consistent;
      ++total_consistent;
      consistent_people.insert(r.participant_id);
    }
  }

  summary.total_participants = per_person.size();
  summary.total_consistent_participants = consistent_people.size();
  const double weeks_d = static_cast<double>(n_weeks);
  summary.avg_weekly_responses = n_weeks ? total_responses / weeks_d : 0.0;
  summary.avg_weekly_consistent = n_weeks ? total_consistent / weeks_d : 0.0;

  for (std::size_t f = 0; f < kFactors.size(); ++f) {
    std::vector<std::string> keys;
    for (const auto& [k, _] : tallies[f]) keys.push_back(k);
    const std::string factor(kFactors[f]);
    std::sort(keys.begin(), keys.end(), [&](const auto& a, const auto& b) {
      return group_less(factor, a, b);
    });
    for (const auto& key : keys) {
      const auto& t = tallies[f].at(key);
      GroupSummary g;
      g.factor = factor;
      g.group = key;
      g.responses_pct = pct(static_cast<double>(t.responses), static_cast<double>(total_responses));
      g.responses_avg = n_weeks ? t.responses / weeks_d : 0.0;
      g.consistent_pct = pct(static_cast<double>(t.consistent), static_cast<double>(total_consistent));
      g.consistent_avg = n_weeks ? t.consistent / weeks_d : 0.0;
      g.participants = t.participants.size();
      g.participants_pct = pct(static_cast<double>(g.participants),
                               static_cast<double>(summary.total_participants));
      g.consistent_participants = t.consistent_participants.size();
      g.consistent_participants_pct =
          pct(static_cast<double>(g.consistent_participants),
              static_cast<double>(summary.total_consistent_participants));
      summary.groups.push_back(std::move(g));
    }
  }

  std::size_t max_count = 0;
  for (const auto& [_, c] : per_person) max_count = std::max(max_count, c);
  if (!per_person.empty()) {
    std::vector<std::size_t> hist(max_count + 1, 0);
    for (const auto& [_, c] : per_person) ++hist[c];
    std::size_t running = 0;
    for (std::size_t c = 0; c <= max_count; ++c) {
      running += hist[c];
      summary.per_participant.push_back(
          {c, hist[c],
           static_cast<double>(running) / static_cast<double>(per_person.size())});
    }
  }

  for (const auto& id : unknown_ids) {
    summary.warnings.push_back("responses from unknown participant '" + id + "'");
  }
  if (!unknown_ids.empty()) {
    spdlog::warn("{} participant id(s) in responses are missing from participants",
                 unknown_ids.size());
  }
  return summary;
}

void write_summary(std::ostream& out, const DemographicSummary& summary) {
  out << csv::kSchemaLine << '\n';
  csv::write_row(out, {"factor", "group", "avg_weekly_responses_pct",
                       "avg_weekly_responses_n", "avg_weekly_consistent_pct",
                       "avg_weekly_consistent_n", "participants_pct",
                       "participants_n", "consistent_participants_pct",
                       "consistent_participants_n"});
  using csv::format_number;
  for (const auto& g : summary.groups) {
    csv::write_row(out, {g.factor, g.group, format_number(g.responses_pct),
                         format_number(g.responses_avg),
                         format_number(g.consistent_pct),
                         format_number(g.consistent_avg),
                         format_number(g.participants_pct),
                         std::to_string(g.participants),
                         format_number(g.consistent_participants_pct),
                         std::to_string(g.consistent_participants)});
  }
  csv::write_row(out, {"total", "total", "100",
                       format_number(summary.avg_weekly_responses), "100",
                       format_number(summary.avg_weekly_consistent), "100",
                       std::to_string(summary.total_participants), "100",
                       std::to_string(summary.total_consistent_participants)});
}

void write_weekly_counts(std::ostream& out, const DemographicSummary& summary) {
  out << csv::kSchemaLine << '\n';
  csv::write_row(out, {"week_ending", "responses", "consistent_responses"});
  for (const auto& w : summary.weekly) {
    csv::write_row(out, {w.week.iso(), std::to_string(w.responses),
                         std::to_string(w.consistent)});
  }
}

void write_responses_per_person(std::ostream& out,
                                const DemographicSummary& summary) {
  out << csv::kSchemaLine << '\n';
  csv::write_row(out, {"responses", "participants", "cumulative_probability"});
  for (const auto& b : summary.per_participant) {
    csv::write_row(out, {std::to_string(b.responses), std::to_string(b.participants),
                         csv::format_number(b.cumulative)});
  }
}

}  // namespace flusurv
