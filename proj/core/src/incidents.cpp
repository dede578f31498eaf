#include "flusurv/incidents.hpp"

#include "flusurv/csv.hpp"
#include "flusurv/errors.hpp"

namespace flusurv {

SymptomGrouping cli1_plus() {
  return {"CLI1+", [](SymptomSet s) { return s.count() >= 1; }};
}

SymptomGrouping cli2_plus() {
  return {"CLI2+", [](SymptomSet s) { return s.count() >= 2; }};
}

SymptomGrouping ili() {
  return {"ILI", [](SymptomSet s) {
            return s.has(Symptom::kCough) && s.has(Symptom::kFever);
          }};
}

std::vector<SymptomGrouping> default_groupings() {
  return {cli1_plus(), cli2_plus(), ili()};
}

SymptomGrouping grouping_by_name(std::string_view name) {
  for (auto& g : default_groupings()) {
    if (g.name == name) return g;
  }
  throw ConfigError("unknown symptom grouping '" + std::string(name) +
                    "' (expected CLI1+, CLI2+ or ILI)");
}

bool meets_grouping(const ResponseRecord& report, const SymptomGrouping& grouping) {
  return grouping(report.symptoms);
}

std::string make_incident_id(std::string_view participant_id,
                             std::string_view grouping, SurveyWeek onset) {
  std::string id(participant_id);
  id += '|';
  id += grouping;
  id += '|';
  id += onset.iso();
  return id;
}

namespace {

void check_history(std::span<const ResponseRecord> history) {
  for (std::size_t i = 1; i < history.size(); ++i) {
    if (history[i].participant_id != history[0].participant_id) {
      throw ContractViolation("history mixes participants");
    }
    if (history[i].week <= history[i - 1].week) {
      throw ContractViolation(
          "history for '" + history[i].participant_id +
          "' is not strictly increasing in week at " + history[i].week.iso());
    }
  }
}

}  // namespace

std::vector<Incident> assign_incidents(std::span<const ResponseRecord> history,
                                       const SymptomGrouping& grouping) {
  check_history(history);
  std::vector<Incident> incidents;
  bool open = false;
  SurveyWeek last_qualifying;

  for (const auto& record : history) {
    if (!grouping(record.symptoms)) {
      open = false;
      continue;
    }
    // While a run is open the previous record is its last qualifying week,
    // so a difference of 2 means the week in between had no response.
    const int gap = open ? record.week - last_qualifying : 0;
    if (open && (gap == 1 || gap == 2)) {
      auto& current = incidents.back();
      if (gap == 2) {
        current.bridged_weeks.push_back(last_qualifying + 1);
        current.member_weeks.push_back(last_qualifying + 1);
      }
      current.member_weeks.push_back(record.week);
    } else {
      Incident inc;
      inc.participant_id = record.participant_id;
      inc.grouping = grouping.name;
      inc.onset_week = record.week;
      inc.incident_id = make_incident_id(record.participant_id, grouping.name,
                                         record.week);
      inc.member_weeks.push_back(record.week);
      incidents.push_back(std::move(inc));
      open = true;
    }
    last_qualifying = record.week;
  }
  return incidents;
}

OnsetTable mark_onsets(const ResponseTable& responses,
                       const SymptomGrouping& grouping) {
  OnsetTable out{grouping.name, std::vector<std::uint8_t>(responses.size(), 0)};
  for (std::size_t k = 0; k < responses.participant_count(); ++k) {
    const std::size_t begin = responses.history_begin(k);
    const auto history = responses.history(k);
    // Rows of one participant are week-ordered, so a single merge pass maps
    // onset weeks back to rows.
    std::size_t row = 0;
    for (const auto& inc : assign_incidents(history, grouping)) {
      while (history[row].week < inc.onset_week) ++row;
      out.is_onset[begin + row] = 1;
    }
  }
  return out;
}

std::vector<Incident> assign_all_incidents(const ResponseTable& responses,
                                           const SymptomGrouping& grouping) {
  std::vector<Incident> all;
  for (std::size_t k = 0; k < responses.participant_count(); ++k) {
    auto part = assign_incidents(responses.history(k), grouping);
    all.insert(all.end(), std::make_move_iterator(part.begin()),
               std::make_move_iterator(part.end()));
  }
  return all;
}

void write_incidents(std::ostream& out, std::span<const Incident> incidents) {
  out << csv::kSchemaLine << '\n';
  csv::write_row(out, {"participant_id", "grouping", "incident_id", "onset_week",
                       "member_weeks"});
  for (const auto& inc : incidents) {
    std::string members;
    for (std::size_t i = 0; i < inc.member_weeks.size(); ++i) {
      if (i) members += ';';
      members += inc.member_weeks[i].iso();
    }
    csv::write_row(out, {inc.participant_id, inc.grouping, inc.incident_id,
                         inc.onset_week.iso(), members});
  }
}

}  // namespace flusurv
