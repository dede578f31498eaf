#include "flusurv/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <boost/random/beta_distribution.hpp>
#include <boost/random/mersenne_twister.hpp>
#include <boost/random/uniform_01.hpp>
#include <boost/random/uniform_int_distribution.hpp>
#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include "flusurv/csv.hpp"
#include "flusurv/errors.hpp"
#include "flusurv/stats.hpp"

namespace flusurv {
namespace {

using Rng = boost::random::mt19937_64;

bool is_probability(double p) { return p >= 0 && p <= 1; }

void check_shares(const std::vector<double>& shares, const std::string& what) {
  const double sum = std::accumulate(shares.begin(), shares.end(), 0.0);
  for (double s : shares) {
    if (!(s >= 0)) throw ConfigError(what + " shares must be non-negative");
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    throw ConfigError(what + " shares sum to " + std::to_string(sum) + ", not 1");
  }
}

class Draws {
 public:
  explicit Draws(std::uint64_t seed) : rng_(seed) {}

  double uniform() { return boost::random::uniform_01<double>{}(rng_); }
  bool bernoulli(double p) { return uniform() < p; }
  std::size_t categorical(std::span<const double> probs) {
    double u = uniform();
    for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
      if (u < probs[i]) return i;
      u -= probs[i];
    }
    return probs.size() - 1;
  }
  int integer(int lo, int hi) {
    return boost::random::uniform_int_distribution<int>{lo, hi}(rng_);
  }
  double beta(double a, double b) {
    return boost::random::beta_distribution<double>{a, b}(rng_);
  }

 private:
  Rng rng_;
};

SymptomSet draw_symptoms(Draws& draws, const SynthConfig& config) {
  const int k = static_cast<int>(draws.categorical(config.symptom_count_probs)) + 1;
  std::vector<Symptom> pool;
  SymptomSet set;
  if (k >= 2 && draws.bernoulli(config.ili_share)) {
    set.set(Symptom::kCough);
    set.set(Symptom::kFever);
  }
  for (std::size_t s = 0; s < kSymptomCount; ++s) {
    if (!set.has(static_cast<Symptom>(s))) pool.push_back(static_cast<Symptom>(s));
  }
  while (set.count() < k) {
    const int pick = draws.integer(0, static_cast<int>(pool.size()) - 1);
    set.set(pool[static_cast<std::size_t>(pick)]);
    pool.erase(pool.begin() + pick);
  }
  return set;
}

// 5-year reference groups covering `band`, with an open top at `top`.
std::vector<AgeBand> reference_groups(const AgeBand& band, int top) {
  std::vector<AgeBand> groups;
  const int stop = band.upper ? *band.upper + 1 : top;
  for (int lo = band.lower; lo < std::min(stop, top); lo += 5) {
    groups.push_back({lo, lo + 4});
  }
  if (!band.upper || *band.upper >= top) groups.push_back({top, std::nullopt});
  return groups;
}

template <typename T>
T required(const toml::table& t, std::string_view key, std::string_view where) {
  auto v = t[key].value<T>();
  if (!v) throw ConfigError(std::string(where) + ": missing or mistyped '" + std::string(key) + "'");
  return *v;
}

void reject_unknown(const toml::table& t, std::initializer_list<std::string_view> known,
                    std::string_view where) {
  for (const auto& [k, _] : t) {
    if (std::find(known.begin(), known.end(), k.str()) == known.end()) {
      throw ConfigError(std::string(where) + ": unknown key '" + std::string(k.str()) + "'");
    }
  }
}

}  // namespace

void SynthConfig::validate() const {
  if (n_participants == 0) throw ConfigError("participants must be positive");
  if (weeks < 1) throw ConfigError("weeks must be positive");
  if (!(mean_illness_weeks >= 1)) throw ConfigError("mean_illness_weeks must be >= 1");
  if (!is_probability(p_resp_well) || !is_probability(p_resp_ill)) {
    throw ConfigError("response probabilities must be in [0, 1]");
  }
  if (!(resp_concentration >= 0)) throw ConfigError("resp_concentration must be >= 0");
  if (start_week_spread < 0) throw ConfigError("start_week_spread must be >= 0");
  if (!is_probability(ili_share)) throw ConfigError("ili_share must be in [0, 1]");
  check_shares({symptom_count_probs.begin(), symptom_count_probs.end()},
               "symptom_count_probs");
  if (bands.empty()) throw ConfigError("at least one age band is required");
  std::vector<AgeBand> partition;
  std::vector<double> reg, ref;
  for (const auto& b : bands) {
    if (!is_probability(b.onset_prob)) {
      throw ConfigError("onset_prob of band " + b.band.label() + " outside [0, 1]");
    }
    partition.push_back(b.band);
    reg.push_back(b.registration_share);
    ref.push_back(b.reference_share);
  }
  try {
    AgeBands{partition};
  } catch (const SchemaError& e) {
    throw ConfigError(e.what());
  }
  check_shares(reg, "band registration");
  check_shares(ref, "band reference");
  if (regions.empty()) throw ConfigError("at least one region is required");
  std::vector<double> region_reg;
  for (const auto& r : regions) {
    if (r.name.empty()) throw ConfigError("region name must not be empty");
    if (!(r.reference_population > 0)) throw ConfigError("reference_population must be positive");
    if (!(r.onset_multiplier >= 0)) throw ConfigError("onset_multiplier must be >= 0");
    region_reg.push_back(r.registration_share);
  }
  check_shares(region_reg, "region registration");
  std::vector<double> eth;
  for (const auto& [_, s] : ethnicities) eth.push_back(s);
  if (!eth.empty()) check_shares(eth, "ethnicity");
}

SynthConfig SynthConfig::defaults() {
  SynthConfig c;
  c.bands = {
      {AgeBand::parse("0-4"), 0.06, 0.04, 0.06},
      {AgeBand::parse("5-19"), 0.04, 0.16, 0.19},
      {AgeBand::parse("20-39"), 0.03, 0.22, 0.27},
      {AgeBand::parse("40-64"), 0.025, 0.40, 0.31},
      {AgeBand::parse("65+"), 0.015, 0.18, 0.17},
  };
  c.regions = {
      {"Auckland Metro", 0.35, 1.7e6, 1.0},
      {"South Island", 0.30, 1.2e6, 1.0},
      {"Wellington", 0.35, 1.1e6, 1.0},
  };
  return c;
}

SynthConfig SynthConfig::from_toml(std::string_view text) {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    throw ConfigError(std::string("synth config: ") + std::string(e.description()));
  }
  reject_unknown(root,
                 {"seed", "participants", "weeks", "first_week_ending",
                  "mean_illness_weeks", "p_resp_well", "p_resp_ill",
                  "resp_concentration", "start_week_spread", "symptom_count_probs",
                  "ili_share", "band", "region", "ethnicity"},
                 "synth config");
  SynthConfig c;
  c.seed = static_cast<std::uint64_t>(root["seed"].value_or<std::int64_t>(1));
  c.n_participants = static_cast<std::size_t>(required<std::int64_t>(root, "participants", "synth config"));
  c.weeks = static_cast<int>(required<std::int64_t>(root, "weeks", "synth config"));
  if (auto d = root["first_week_ending"].value<std::string>()) {
    try {
      c.first_week = SurveyWeek::parse(*d);
    } catch (const ParseError& e) {
      throw ConfigError(std::string("first_week_ending: ") + e.what());
    }
  }
  c.mean_illness_weeks = root["mean_illness_weeks"].value_or(c.mean_illness_weeks);
  c.p_resp_well = root["p_resp_well"].value_or(c.p_resp_well);
  c.p_resp_ill = root["p_resp_ill"].value_or(c.p_resp_ill);
  c.resp_concentration = root["resp_concentration"].value_or(c.resp_concentration);
  c.start_week_spread = static_cast<int>(root["start_week_spread"].value_or<std::int64_t>(0));
  c.ili_share = root["ili_share"].value_or(c.ili_share);
  if (auto* arr = root["symptom_count_probs"].as_array()) {
    if (arr->size() != kSymptomCount) {
      throw ConfigError("symptom_count_probs needs exactly 6 entries");
    }
    for (std::size_t i = 0; i < kSymptomCount; ++i) {
      auto v = (*arr)[i].value<double>();
      if (!v) throw ConfigError("symptom_count_probs must be numbers");
      c.symptom_count_probs[i] = *v;
    }
  }
  if (auto* arr = root["band"].as_array()) {
    for (auto& node : *arr) {
      auto* t = node.as_table();
      if (!t) throw ConfigError("[[band]] entries must be tables");
      reject_unknown(*t, {"age", "onset_prob", "registration_share", "reference_share"},
                     "[[band]]");
      SynthBand b;
      try {
        b.band = AgeBand::parse(required<std::string>(*t, "age", "[[band]]"));
      } catch (const SchemaError& e) {
        throw ConfigError(e.what());
      }
      b.onset_prob = required<double>(*t, "onset_prob", "[[band]]");
      b.registration_share = required<double>(*t, "registration_share", "[[band]]");
      b.reference_share = required<double>(*t, "reference_share", "[[band]]");
      c.bands.push_back(b);
    }
  }
  if (auto* arr = root["region"].as_array()) {
    for (auto& node : *arr) {
      auto* t = node.as_table();
      if (!t) throw ConfigError("[[region]] entries must be tables");
      reject_unknown(*t, {"name", "registration_share", "reference_population",
                          "onset_multiplier"},
                     "[[region]]");
      SynthRegion r;
      r.name = required<std::string>(*t, "name", "[[region]]");
      r.registration_share = required<double>(*t, "registration_share", "[[region]]");
      r.reference_population = required<double>(*t, "reference_population", "[[region]]");
      r.onset_multiplier = (*t)["onset_multiplier"].value_or(1.0);
      c.regions.push_back(r);
    }
  }
  if (auto* arr = root["ethnicity"].as_array()) {
    c.ethnicities.clear();
    for (auto& node : *arr) {
      auto* t = node.as_table();
      if (!t) throw ConfigError("[[ethnicity]] entries must be tables");
      reject_unknown(*t, {"name", "share"}, "[[ethnicity]]");
      c.ethnicities.emplace_back(required<std::string>(*t, "name", "[[ethnicity]]"),
                                 required<double>(*t, "share", "[[ethnicity]]"));
    }
  }
  c.validate();
  return c;
}

SynthConfig SynthConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open synth config '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return from_toml(buf.str());
}

SynthCohort generate_cohort(const SynthConfig& config) {
  config.validate();
  Draws draws(config.seed);
  const auto groupings = default_groupings();
  const std::size_t n = config.n_participants;
  const std::size_t n_bands = config.bands.size();

  std::vector<double> band_reg, region_reg, eth_share;
  for (const auto& b : config.bands) band_reg.push_back(b.registration_share);
  for (const auto& r : config.regions) region_reg.push_back(r.registration_share);
  for (const auto& [_, s] : config.ethnicities) eth_share.push_back(s);

  const int width = std::max<int>(6, static_cast<int>(std::to_string(n).size()));
  std::vector<Participant> people;
  std::vector<ResponseRecord> records;
  // onsets[week][grouping][band]
  std::vector<std::vector<std::vector<std::size_t>>> onsets(
      static_cast<std::size_t>(config.weeks),
      std::vector<std::vector<std::size_t>>(groupings.size(),
                                            std::vector<std::size_t>(n_bands, 0)));
  std::vector<std::size_t> band_size(n_bands, 0);
  const double lift = config.p_resp_ill - config.p_resp_well;
  const double continue_prob = 1.0 - 1.0 / config.mean_illness_weeks;

  for (std::size_t i = 0; i < n; ++i) {
    Participant p;
    std::string id = std::to_string(i + 1);
    p.participant_id = "S" + std::string(static_cast<std::size_t>(width) - id.size(), '0') + id;
    const std::size_t band = draws.categorical(band_reg);
    const auto& ab = config.bands[band].band;
    const int top = ab.upper ? *ab.upper : std::min(120, ab.lower + 14);
    p.age_years = draws.integer(ab.lower, top);
    const std::size_t region = draws.categorical(region_reg);
    p.region = config.regions[region].name;
    p.gender = draws.bernoulli(0.55) ? "Female" : "Male";
    p.ethnicity = eth_share.empty() ? "" : config.ethnicities[draws.categorical(eth_share)].first;
    ++band_size[band];

    double well = config.p_resp_well;
    if (config.resp_concentration > 0 && well > 0 && well < 1) {
      well = draws.beta(well * config.resp_concentration,
                        (1 - well) * config.resp_concentration);
    }
    const double ill_prop = std::clamp(well + lift, 0.0, 1.0);
    const int start = draws.integer(0, config.start_week_spread);
    const double onset_prob = std::min(
        1.0, config.bands[band].onset_prob * config.regions[region].onset_multiplier);

    int remaining = 0;
    bool ill_last_week = false;
    SymptomSet symptoms;
    for (int t = 0; t < config.weeks; ++t) {
      if (remaining == 0 && !ill_last_week && draws.bernoulli(onset_prob)) {
        remaining = 1;
        while (draws.bernoulli(continue_prob)) ++remaining;
        symptoms = draw_symptoms(draws, config);
        for (std::size_t g = 0; g < groupings.size(); ++g) {
          if (groupings[g](symptoms)) ++onsets[static_cast<std::size_t>(t)][g][band];
        }
      }
      const bool ill = remaining > 0;
      const bool responds = draws.bernoulli(ill ? ill_prop : well);
      if (t >= start && responds) {
        records.push_back({p.participant_id, config.first_week + t,
                           ill ? symptoms : SymptomSet{}});
      }
      ill_last_week = ill;
      if (ill) --remaining;
    }
    people.push_back(std::move(p));
  }

  SynthCohort cohort;
  cohort.responses = ResponseTable::from_records(
      std::move(records),
      WeekRange::closed(config.first_week, config.first_week + (config.weeks - 1)));
  cohort.participants = ParticipantTable::from_participants(std::move(people));

  int top = 85;
  for (const auto& b : config.bands) {
    if (!b.band.upper) top = std::max(top, b.band.lower);
  }
  std::vector<ReferencePopulation::Entry> entries;
  for (const auto& r : config.regions) {
    for (const auto& b : config.bands) {
      const auto groups = reference_groups(b.band, top);
      for (const auto& g : groups) {
        entries.push_back({r.name, g,
                           r.reference_population * b.reference_share /
                               static_cast<double>(groups.size())});
      }
    }
  }
  cohort.reference = ReferencePopulation::from_entries(std::move(entries));

  for (int t = 0; t < config.weeks; ++t) {
    for (std::size_t g = 0; g < groupings.size(); ++g) {
      const auto& by_band = onsets[static_cast<std::size_t>(t)][g];
      GroundTruthRow row;
      row.week = config.first_week + t;
      row.grouping = groupings[g].name;
      double weighted = 0, share = 0;
      std::size_t total = 0;
      for (std::size_t b = 0; b < n_bands; ++b) {
        total += by_band[b];
        if (band_size[b] == 0) continue;
        weighted += config.bands[b].reference_share *
                    static_cast<double>(by_band[b]) / static_cast<double>(band_size[b]);
        share += config.bands[b].reference_share;
      }
      row.cohort_incidence = static_cast<double>(total) / static_cast<double>(n);
      row.population_incidence = share > 0 ? weighted / share : 0.0;
      cohort.ground_truth.push_back(std::move(row));
    }
  }
  return cohort;
}

void write_ground_truth(std::ostream& out, std::span<const GroundTruthRow> rows) {
  out << csv::kSchemaLine << '\n';
  csv::write_row(out, {"week_ending", "grouping", "cohort_incidence",
                       "population_incidence"});
  for (const auto& r : rows) {
    csv::write_row(out, {r.week.iso(), r.grouping, csv::format_number(r.cohort_incidence),
                         csv::format_number(r.population_incidence)});
  }
}

BootstrapResult bootstrap_ci(std::span<const double> y, std::span<const double> w,
                             std::size_t replicates, std::uint64_t seed, double level) {
  const std::size_t n = y.size();
  if (n < 2) throw ContractViolation("bootstrap needs at least two rows");
  if (w.size() != n) throw ContractViolation("y and w differ in length");
  if (replicates < 1000) throw ContractViolation("bootstrap needs at least 1000 replicates");

  Draws draws(seed);
  BootstrapResult result;
  std::vector<double> estimates;
  estimates.reserve(replicates);
  for (std::size_t b = 0; b < replicates; ++b) {
    double num = 0, den = 0;
    bool all_same = true;
    double first = 0;
    for (std::size_t k = 0; k < n; ++k) {
      const auto idx = static_cast<std::size_t>(draws.integer(0, static_cast<int>(n) - 1));
      if (k == 0) first = y[idx];
      num += w[idx] * y[idx];
      den += w[idx];
      all_same = all_same && y[idx] == first;
    }
    if (all_same) ++result.degenerate;
    estimates.push_back(num / den);
  }
  std::sort(estimates.begin(), estimates.end());
  const double tail = (1.0 - level) / 2.0;
  result.ci = {stats::quantile_sorted(estimates, tail),
               stats::quantile_sorted(estimates, 1.0 - tail)};
  return result;
}

std::vector<Incident> incident_oracle(std::span<const ResponseRecord> history,
                                      const SymptomGrouping& grouping) {
  for (std::size_t i = 1; i < history.size(); ++i) {
    if (history[i].participant_id != history[0].participant_id ||
        history[i].week <= history[i - 1].week) {
      throw ContractViolation("history must be one participant in increasing week order");
    }
  }
  const auto find = [&](SurveyWeek w) -> const ResponseRecord* {
    for (const auto& r : history) {
      if (r.week == w) return &r;
    }
    return nullptr;
  };
  const auto responded = [&](SurveyWeek w) { return find(w) != nullptr; };
  const auto qualifies = [&](SurveyWeek w) {
    const auto* r = find(w);
    return r && grouping(r->symptoms);
  };

  std::vector<Incident> out;
  for (const auto& r : history) {
    const SurveyWeek t = r.week;
    if (!qualifies(t)) continue;
    const bool continuation = qualifies(t - 1) || (!responded(t - 1) && qualifies(t - 2));
    if (continuation) continue;
    Incident inc;
    inc.participant_id = r.participant_id;
    inc.grouping = grouping.name;
    inc.onset_week = t;
    inc.incident_id = make_incident_id(r.participant_id, grouping.name, t);
    inc.member_weeks.push_back(t);
    SurveyWeek u = t;
    for (;;) {
      if (qualifies(u + 1)) {
        u = u + 1;
        inc.member_weeks.push_back(u);
      } else if (!responded(u + 1) && qualifies(u + 2)) {
        inc.bridged_weeks.push_back(u + 1);
        inc.member_weeks.push_back(u + 1);
        u = u + 2;
        inc.member_weeks.push_back(u);
      } else {
        break;
      }
    }
    out.push_back(std::move(inc));
  }
  return out;
}

}  // namespace flusurv
