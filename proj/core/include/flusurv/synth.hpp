#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "flusurv/estimation.hpp"
#include "flusurv/incidents.hpp"
#include "flusurv/survey_data.hpp"

namespace flusurv {

struct SynthBand {
  AgeBand band;
  double onset_prob = 0.02;          // weekly probability of a new illness
  double registration_share = 0;     // share of the cohort
  double reference_share = 0;        // share of the reference population
};

struct SynthRegion {
  std::string name;
  double registration_share = 1;
  double reference_population = 1e6;
  double onset_multiplier = 1;
};

// Parameters of a synthetic participatory cohort.
//
// Each week a well participant (who was also well the week before) falls ill
// with their band's onset probability times their region's multiplier. An
// illness lasts 1 + Geometric weeks with the configured mean and keeps one
// symptom set: the symptom count is drawn first, then the symptoms, with
// cough and fever forced for a share of multi-symptom illnesses.
//
// Response behaviour: every participant has a baseline propensity drawn from
// Beta(p_resp_well * c, (1 - p_resp_well) * c) for concentration c > 0 (or
// exactly p_resp_well when c == 0). While ill the propensity rises by
// p_resp_ill - p_resp_well, clamped to [0, 1].
struct SynthConfig {
  std::uint64_t seed = 1;
  std::size_t n_participants = 1000;
  int weeks = 52;
  SurveyWeek first_week = SurveyWeek::parse("2020-05-03");
  double mean_illness_weeks = 1.5;
  double p_resp_well = 1.0;
  double p_resp_ill = 1.0;
  double resp_concentration = 0.0;
  int start_week_spread = 0;  // participants join at a uniform week in [0, spread]
  std::array<double, kSymptomCount> symptom_count_probs = {0.45, 0.25, 0.15,
                                                           0.08, 0.05, 0.02};
  double ili_share = 0.35;  // P(cough and fever | two or more symptoms)
  std::vector<SynthBand> bands;
  std::vector<SynthRegion> regions;
  std::vector<std::pair<std::string, double>> ethnicities = {
      {"European", 0.8}, {"Maori", 0.08}, {"Pacific", 0.02}, {"Asian", 0.05},
      {"Other", 0.05}};

  // Throws ConfigError for probabilities outside [0, 1], durations below 1,
  // bands that do not partition [0, inf) or shares that do not sum to 1.
  void validate() const;

  // A small two-region cohort with an unbiased panel.
  static SynthConfig defaults();
  static SynthConfig from_toml(std::string_view text);
  static SynthConfig load(const std::filesystem::path& path);
};

struct GroundTruthRow {
  SurveyWeek week;
  std::string grouping;
  double cohort_incidence = 0;      // onsets / cohort size
  double population_incidence = 0;  // band rates weighted by reference shares
};

struct SynthCohort {
  ResponseTable responses;
  ParticipantTable participants;
  ReferencePopulation reference;
  std::vector<GroundTruthRow> ground_truth;
};

// Deterministic given `config.seed`.
SynthCohort generate_cohort(const SynthConfig& config);

void write_ground_truth(std::ostream& out, std::span<const GroundTruthRow> rows);

struct BootstrapResult {
  Interval ci;
  std::size_t degenerate = 0;  // resamples whose y values were all equal
};

// Percentile interval of the weighted proportion over `replicates` row
// resamples drawn with replacement. Needs n >= 2 and replicates >= 1000.
BootstrapResult bootstrap_ci(std::span<const double> y, std::span<const double> w,
                             std::size_t replicates, std::uint64_t seed,
                             double level = 0.95);

// Independent reference for assign_incidents: decides onset and membership
// week by week with direct lookups in the history (quadratic time).
std::vector<Incident> incident_oracle(std::span<const ResponseRecord> history,
                                      const SymptomGrouping& grouping);

}  // namespace flusurv
