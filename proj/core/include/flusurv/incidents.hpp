#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "flusurv/survey_data.hpp"

namespace flusurv {

// A named predicate over the six reported symptoms.
struct SymptomGrouping {
  std::string name;
  std::function<bool(SymptomSet)> predicate;

  bool operator()(SymptomSet s) const { return predicate(s); }
};

// Any one or more symptom.
SymptomGrouping cli1_plus();
// Any two or more symptoms.
SymptomGrouping cli2_plus();
// Cough and fever together.
SymptomGrouping ili();

// CLI1+, CLI2+ and ILI, in that order.
std::vector<SymptomGrouping> default_groupings();
// Looks up one of the built-in groupings by name; throws ConfigError.
SymptomGrouping grouping_by_name(std::string_view name);

bool meets_grouping(const ResponseRecord& report, const SymptomGrouping& grouping);

struct Incident {
  std::string incident_id;  // "<participant>|<grouping>|<onset week>"
  std::string participant_id;
  std::string grouping;
  SurveyWeek onset_week;
  std::vector<SurveyWeek> member_weeks;   // qualifying and bridged, ascending
  std::vector<SurveyWeek> bridged_weeks;  // no-response weeks inside the run

  friend bool operator==(const Incident&, const Incident&) = default;
};

std::string make_incident_id(std::string_view participant_id,
                             std::string_view grouping, SurveyWeek onset);

// Groups one participant's qualifying weeks into incidents. Two qualifying
// weeks join the same incident when they are consecutive, or when exactly one
// week without any response separates them. Any responded week that does not
// qualify, or a gap of two or more missing weeks, ends the incident.
//
// `history` must hold one participant's records in strictly increasing week
// order; throws ContractViolation otherwise.
std::vector<Incident> assign_incidents(std::span<const ResponseRecord> history,
                                       const SymptomGrouping& grouping);

// Per-response onset flags, aligned with the rows of the table they were
// computed from.
struct OnsetTable {
  std::string grouping;
  std::vector<std::uint8_t> is_onset;
};

OnsetTable mark_onsets(const ResponseTable& responses,
                       const SymptomGrouping& grouping);

std::vector<Incident> assign_all_incidents(const ResponseTable& responses,
                                           const SymptomGrouping& grouping);

// incidents.csv: participant_id,grouping,incident_id,onset_week,member_weeks
// with member weeks joined by ';'.
void write_incidents(std::ostream& out, std::span<const Incident> incidents);

}  // namespace flusurv
