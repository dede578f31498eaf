#include "cli/commands.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "flusurv/consistency.hpp"
#include "flusurv/errors.hpp"
#include "flusurv/estimation.hpp"
#include "flusurv/incidents.hpp"
#include "flusurv/raking.hpp"
#include "flusurv/survey_data.hpp"
#include "flusurv/sweep.hpp"
#include "flusurv/synth.hpp"

namespace flusurv::cli {
namespace fs = std::filesystem;

namespace {

class IoError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "io"; }
};

std::ifstream open_input(const fs::path& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw IoError(std::string("cannot open ") + what + " file '" + path.string() + "'");
  return in;
}

template <typename F>
auto parse_file(const fs::path& path, const char* what, F&& parse) {
  auto in = open_input(path, what);
  try {
    return parse(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  } catch (const SchemaError& e) {
    throw SchemaError(path.string() + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

// Writes next to the target and renames into place so readers never see a
// partial file.
void write_atomic(const fs::path& target, const std::function<void(std::ostream&)>& body) {
  fs::create_directories(target.parent_path().empty() ? fs::path(".") : target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    body(out);
    out.flush();
    if (!out) throw IoError("failed writing '" + tmp.string() + "'");
  }
  fs::rename(tmp, target);
  spdlog::info("wrote {}", target.string());
}

struct Dataset {
  ResponseTable responses;
  ParticipantTable participants;
  ReferencePopulation reference;
};

Dataset load(const InputPaths& inputs, bool need_reference) {
  Dataset d;
  d.responses = parse_file(inputs.responses, "responses",
                           [](std::istream& in) { return parse_responses(in); });
  d.participants = parse_file(inputs.participants, "participants",
                              [](std::istream& in) { return parse_demographics(in); });
  if (need_reference) {
    d.reference = parse_file(inputs.reference, "reference population", [](std::istream& in) {
      return parse_reference_population(in);
    });
  }
  return d;
}

AgeBands raking_bands(const RunConfig& config, const ReferencePopulation& reference) {
  if (!config.bands.empty()) return AgeBands::parse(config.bands);
  int top = 85;
  bool open = false;
  for (const auto& e : reference.entries()) {
    if (!e.group.upper) {
      top = open ? std::min(top, e.group.lower) : e.group.lower;
      open = true;
    }
  }
  return AgeBands::five_year(top);
}

std::vector<SymptomGrouping> groupings_of(const RunConfig& config) {
  std::vector<SymptomGrouping> out;
  for (const auto& name : config.groupings) out.push_back(grouping_by_name(name));
  if (out.empty()) throw ConfigError("no symptom grouping selected");
  return out;
}

ConsistencyParams params_of(const RunConfig& config) {
  ConsistencyParams p{config.window, config.missing,
                      config.lenient_warmup ? WarmupPolicy::kPriorWeeksMissing
                                            : WarmupPolicy::kStrict};
  p.validate();
  return p;
}

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) ==
                  std::tolower(static_cast<unsigned char>(y));
         });
}

std::string lowercase(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

}  // namespace

std::vector<int> parse_int_range(const std::string& text) {
  std::vector<int> out;
  const auto to_int = [&](const std::string& s) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("malformed integer range '" + text + "'");
    }
  };
  if (const auto dots = text.find(".."); dots != std::string::npos) {
    const int lo = to_int(text.substr(0, dots));
    const int hi = to_int(text.substr(dots + 2));
    if (hi < lo) throw ConfigError("empty integer range '" + text + "'");
    for (int v = lo; v <= hi; ++v) out.push_back(v);
    return out;
  }
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find(',', start);
    if (end == std::string::npos) end = text.size();
    if (end > start) out.push_back(to_int(text.substr(start, end - start)));
    start = end + 1;
  }
  if (out.empty()) throw ConfigError("empty integer list");
  return out;
}

int cmd_validate(const InputPaths& inputs, std::ostream& report) {
  std::vector<std::string> errors, warnings;
  std::optional<ResponseTable> responses;
  std::optional<ParticipantTable> participants;
  std::optional<ReferencePopulation> reference;

  const auto attempt = [&](auto&& fn) {
    try {
      fn();
    } catch (const IoError& e) {
      errors.push_back(e.what());
    } catch (const Error& e) {
      errors.push_back(std::string(e.kind()) + ": " + e.what());
    }
  };
  attempt([&] {
    responses = parse_file(inputs.responses, "responses",
                           [](std::istream& in) { return parse_responses(in); });
  });
  attempt([&] {
    participants = parse_file(inputs.participants, "participants",
                              [](std::istream& in) { return parse_demographics(in); });
  });
  if (!inputs.reference.empty()) {
    attempt([&] {
      reference = parse_file(inputs.reference, "reference population",
                             [](std::istream& in) { return parse_reference_population(in); });
    });
  }

  if (responses && participants) {
    std::set<std::string> unknown;
    for (const auto& r : responses->records()) {
      if (!participants->find(r.participant_id)) unknown.insert(r.participant_id);
    }
    for (const auto& id : unknown) {
      errors.push_back("responses reference unknown participant '" + id + "'");
    }
    std::size_t missing_age = 0, missing_region = 0;
    for (const auto& p : participants->all()) {
      missing_age += !p.age_years;
      missing_region += !p.region;
      if (reference && p.region && !reference->has_region(*p.region)) {
        errors.push_back("participant '" + p.participant_id + "' has region '" + *p.region +
                         "' missing from the reference population");
      }
    }
    if (missing_age) {
      warnings.push_back(std::to_string(missing_age) +
                         " participant(s) without age are excluded from weighted estimates");
    }
    if (missing_region) {
      warnings.push_back(std::to_string(missing_region) +
                         " participant(s) without region are excluded from regional estimates");
    }
  }

  if (responses) {
    report << "responses: " << responses->size() << " rows, "
           << responses->participant_count() << " participants";
    if (!responses->weeks().empty) {
      report << ", weeks " << responses->weeks().first.iso() << " .. "
             << responses->weeks().last.iso();
    }
    report << '\n';
  }
  if (participants) report << "participants: " << participants->size() << " rows\n";
  if (reference) {
    report << "reference population: " << reference->entries().size() << " rows, "
           << reference->regions().size() << " regions\n";
  }
  for (const auto& w : warnings) report << "warning: " << w << '\n';
  for (const auto& e : errors) report << "error: " << e << '\n';
  report << (errors.empty() ? "OK" : "FAILED") << '\n';
  return errors.empty() ? kSuccess : kValidationFailure;
}

void cmd_estimate(const RunConfig& config) {
  const auto groupings = groupings_of(config);
  const auto params = params_of(config);
  if (!(config.ci_level > 0 && config.ci_level < 1)) {
    throw ConfigError("--ci-level must be in (0, 1)");
  }
  const auto data = load(config.inputs, config.use_weights || !config.compare.empty() ||
                                            !iequals(config.scope, "national") ||
                                            config.adjustment);

  std::vector<OnsetTable> onsets;
  for (const auto& g : groupings) onsets.push_back(mark_onsets(data.responses, g));

  ConsistencyMark marks;
  if (config.use_consistency) {
    marks = mark_consistency(data.responses, params);
  } else {
    marks = {params, std::vector<std::uint8_t>(data.responses.size(), 1)};
  }

  std::vector<Scope> scopes;
  scopes.push_back(Scope::parse(config.scope, data.reference));
  if (!config.compare.empty()) {
    if (iequals(config.compare, "rest")) {
      scopes.push_back(Scope::complement(scopes[0], data.reference, config.compare));
    } else {
      scopes.push_back(Scope::parse(config.compare, data.reference));
    }
  }

  WeightingConfig weighting;
  if (config.use_weights || config.adjustment) {
    weighting.bands = raking_bands(config, data.reference);
  }
  weighting.location_margin = config.location_margin;
  weighting.rake.strict_cells = config.strict_cells;

  FactorSpec factors;
  if (!config.by_age.empty()) {
    factors.age_bands = AgeBands::parse(config.by_age);
    factors.participants = &data.participants;
  }
  const bool tag_location = scopes.size() > 1 || !scopes[0].is_national();

  std::vector<std::vector<EstimateCell>> per_scope;
  std::vector<WeightTable> all_tables;
  for (const auto& scope : scopes) {
    auto mask = scope_mask(data.responses, data.participants, scope);
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = mask[i] && marks.consistent[i];
    std::vector<double> weights;
    if (config.use_weights) {
      weighting.scope = scope;
      auto tables = weights_by_week(data.responses, mask, data.participants,
                                    data.reference, weighting);
      weights = response_weights(data.responses.size(), tables);
      all_tables.insert(all_tables.end(), std::make_move_iterator(tables.begin()),
                        std::make_move_iterator(tables.end()));
    } else {
      weights = unit_weights(mask);
    }
    factors.location = tag_location ? scope.label : "";
    auto cells = estimate_by(data.responses, onsets, weights, factors, config.ci_level);
    if (config.trim_warmup && !data.responses.weeks().empty) {
      const SurveyWeek first_reported = data.responses.weeks().first + params.window;
      std::erase_if(cells, [&](const EstimateCell& c) { return c.week < first_reported; });
    }
    per_scope.push_back(std::move(cells));
  }

  std::vector<EstimateCell> cells;
  for (const auto& s : per_scope) cells.insert(cells.end(), s.begin(), s.end());
  write_atomic(config.out / "estimates.csv",
               [&](std::ostream& o) { write_estimates(o, cells); });

  if (per_scope.size() == 2) {
    const auto comparisons = compare_cells(per_scope[0], per_scope[1]);
    write_atomic(config.out / "comparisons.csv",
                 [&](std::ostream& o) { write_comparisons(o, comparisons); });
  }

  if (config.adjustment) {
    weighting.scope = scopes[0];
    auto rows = adjustment_effect(data.responses, data.participants, data.reference,
                                  params, weighting, groupings);
    if (config.trim_warmup && !data.responses.weeks().empty) {
      const SurveyWeek first_reported = data.responses.weeks().first + params.window;
      std::erase_if(rows, [&](const AdjustmentRow& r) { return r.week < first_reported; });
    }
    write_atomic(config.out / "adjustment_effect.csv",
                 [&](std::ostream& o) { write_adjustment_effect(o, rows); });
  }

  if (config.export_debug) {
    std::vector<Incident> incidents;
    for (const auto& g : groupings) {
      auto part = assign_all_incidents(data.responses, g);
      incidents.insert(incidents.end(), part.begin(), part.end());
    }
    write_atomic(config.out / "incidents.csv",
                 [&](std::ostream& o) { write_incidents(o, incidents); });
    write_atomic(config.out / "consistency_marks.csv", [&](std::ostream& o) {
      write_consistency_marks(o, data.responses, marks);
    });
    if (config.use_weights) {
      write_atomic(config.out / "weights.csv",
                   [&](std::ostream& o) { write_weights(o, data.responses, all_tables); });
    }
  }
}

void cmd_sweep(const RunConfig& config, const SweepGrid& grid) {
  const auto groupings = groupings_of(config);
  const auto data = load(config.inputs, grid.weighting);
  SweepOptions options;
  options.windows = grid.windows;
  options.missing = grid.missing;
  options.exclusion_threshold = grid.threshold;
  options.warmup = config.lenient_warmup ? WarmupPolicy::kPriorWeeksMissing
                                         : WarmupPolicy::kStrict;
  if (grid.weighting) {
    SweepWeighting w;
    w.participants = &data.participants;
    w.reference = &data.reference;
    w.config.bands = raking_bands(config, data.reference);
    w.config.scope = Scope::parse(config.scope, data.reference);
    w.config.rake.strict_cells = config.strict_cells;
    options.weighting = w;
  }
  const auto result = run_sweep(data.responses, groupings, options);
  write_atomic(config.out / "sweep_weekly.csv", [&](std::ostream& o) {
    write_sweep_weekly(o, result, grid.threshold);
  });
  write_atomic(config.out / "sweep_summary.csv",
               [&](std::ostream& o) { write_sweep_summary(o, result); });
}

void cmd_summarize(const RunConfig& config) {
  const auto params = params_of(config);
  const auto data = load(config.inputs, false);
  const auto marks = mark_consistency(data.responses, params);
  const auto summary = summarize_demographics(
      data.responses, data.participants, std::span<const std::uint8_t>(marks.consistent));
  write_atomic(config.out / "summary.csv",
               [&](std::ostream& o) { write_summary(o, summary); });
  write_atomic(config.out / "weekly_counts.csv",
               [&](std::ostream& o) { write_weekly_counts(o, summary); });
  write_atomic(config.out / "responses_per_person.csv",
               [&](std::ostream& o) { write_responses_per_person(o, summary); });
}

void cmd_synth(const fs::path& config_path, const fs::path& out,
               std::optional<std::uint64_t> seed) {
  auto config = config_path.empty() ? SynthConfig::defaults() : SynthConfig::load(config_path);
  if (seed) config.seed = *seed;
  const auto cohort = generate_cohort(config);
  write_atomic(out / "responses.csv",
               [&](std::ostream& o) { write_responses(o, cohort.responses); });
  write_atomic(out / "participants.csv",
               [&](std::ostream& o) { write_demographics(o, cohort.participants); });
  write_atomic(out / "reference_population.csv",
               [&](std::ostream& o) { write_reference_population(o, cohort.reference); });
  write_atomic(out / "ground_truth.csv",
               [&](std::ostream& o) { write_ground_truth(o, cohort.ground_truth); });
}

namespace {

void configure_logging() {
  auto logger = spdlog::get("flusurv");
  if (!logger) logger = spdlog::stderr_color_mt("flusurv");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::warn);
  if (const char* level = std::getenv("FLUSURV_LOG_LEVEL")) {
    const auto parsed = spdlog::level::from_str(lowercase(level));
    // from_str maps unknown names to "off"; only honour explicit "off".
    if (parsed != spdlog::level::off || lowercase(level) == "off") spdlog::set_level(parsed);
  }
}

int report_error(std::string_view kind, std::string_view message, int code) {
  nlohmann::json j = {{"error", kind}, {"message", message}, {"exit_code", code}};
  std::cerr << j.dump() << '\n';
  return code;
}

void add_input_options(CLI::App* cmd, InputPaths& inputs, bool reference_required) {
  cmd->add_option("--responses", inputs.responses, "responses.csv")->required();
  cmd->add_option("--participants", inputs.participants, "participants.csv")->required();
  auto* ref = cmd->add_option("--reference", inputs.reference, "reference_population.csv");
  if (reference_required) ref->required();
}

void add_consistency_options(CLI::App* cmd, RunConfig& config) {
  cmd->add_option("--window", config.window, "consistency window W (weeks)")
      ->capture_default_str();
  cmd->add_option("--missing", config.missing, "missing weeks allowed M")
      ->capture_default_str();
  cmd->add_flag("--lenient-warmup", config.lenient_warmup,
                "treat weeks before the dataset as non-responses instead of marking "
                "the first W weeks not consistent");
}

}  // namespace

int run(int argc, char** argv) {
  configure_logging();

  CLI::App app{"Weekly symptom-onset incidence from participatory surveillance surveys"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "flusurv 0.1.0");

  RunConfig config;
  SweepGrid grid;
  std::string grouping_list;
  std::string w_range = "1..8", m_range = "0..2";
  fs::path synth_config;
  std::optional<std::uint64_t> seed;
  bool no_weights = false, no_consistency = false;

  auto* validate = app.add_subcommand("validate", "check input files");
  add_input_options(validate, config.inputs, false);

  auto* estimate = app.add_subcommand("estimate", "weekly incidence with 95% CIs");
  add_input_options(estimate, config.inputs, false);
  add_consistency_options(estimate, config);
  estimate->add_option("--grouping", grouping_list,
                       "CLI1+, CLI2+, ILI (comma separated; default all)");
  estimate->add_option("--scope", config.scope, "national, a region, or regions joined by '|'")
      ->capture_default_str();
  estimate->add_option("--compare", config.compare,
                       "second scope to test against (\"Rest\" = complement of --scope)");
  estimate->add_option("--bands", config.bands, "raking age bands, e.g. 0-4,5-19,20-64,65+");
  estimate->add_option("--by-age", config.by_age, "split estimates by these age bands");
  estimate->add_flag("--location-margin", config.location_margin,
                     "also rake to regional totals within the scope");
  estimate->add_flag("--strict-cells", config.strict_cells,
                     "fail instead of collapsing empty age cells");
  estimate->add_flag("--trim-warmup", config.trim_warmup,
                     "omit the first W weeks from reported output");
  estimate->add_option("--ci-level", config.ci_level, "confidence level")->capture_default_str();
  estimate->add_flag("--no-weights", no_weights, "skip age raking");
  estimate->add_flag("--no-consistency", no_consistency, "use every response");
  estimate->add_flag("--adjustment", config.adjustment, "also write adjustment_effect.csv");
  estimate->add_flag("--export-debug", config.export_debug,
                     "write incidents.csv, consistency_marks.csv and weights.csv");
  estimate->add_option("--out", config.out, "output directory")->capture_default_str();

  auto* sweep = app.add_subcommand("sweep", "consistency parameter trade-off grid");
  add_input_options(sweep, config.inputs, false);
  sweep->add_option("--grouping", grouping_list, "groupings (comma separated)");
  sweep->add_option("--w", w_range, "window sizes, e.g. 1..8")->capture_default_str();
  sweep->add_option("--m", m_range, "missing weeks allowed, e.g. 0..2")->capture_default_str();
  sweep->add_option("--threshold", grid.threshold, "exclusion filter threshold")
      ->capture_default_str();
  sweep->add_flag("--weighting", grid.weighting, "rake the consistent subset");
  sweep->add_option("--scope", config.scope, "weighting scope")->capture_default_str();
  sweep->add_option("--bands", config.bands, "raking age bands");
  sweep->add_flag("--lenient-warmup", config.lenient_warmup,
                 "treat weeks before the dataset as non-responses");
  sweep->add_flag("--strict-cells", config.strict_cells, "fail on empty age cells");
  sweep->add_option("--out", config.out, "output directory")->capture_default_str();

  auto* summarize = app.add_subcommand("summarize", "cohort demographic summaries");
  add_input_options(summarize, config.inputs, false);
  add_consistency_options(summarize, config);
  summarize->add_option("--out", config.out, "output directory")->capture_default_str();

  auto* synth = app.add_subcommand("synth", "generate a synthetic cohort");
  synth->add_option("--config", synth_config, "synth.toml (default: built-in cohort)");
  synth->add_option("--seed", seed, "override the configured seed");
  synth->add_option("--out", config.out, "output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("usage", e.what(), kRuntimeError);
  }

  try {
    if (!grouping_list.empty()) {
      config.groupings.clear();
      std::size_t start = 0;
      while (start <= grouping_list.size()) {
        auto end = grouping_list.find(',', start);
        if (end == std::string::npos) end = grouping_list.size();
        if (end > start) config.groupings.push_back(grouping_list.substr(start, end - start));
        start = end + 1;
      }
    }
    config.use_weights = !no_weights;
    config.use_consistency = !no_consistency;

    if (*validate) return cmd_validate(config.inputs, std::cout);
    if ((*estimate || *sweep) && config.inputs.reference.empty()) {
      const bool needs = *estimate ? config.use_weights || !config.compare.empty() ||
                                         !iequals(config.scope, "national") || config.adjustment
                                   : grid.weighting;
      if (needs) throw ConfigError("--reference is required for weighting or scoped estimates");
    }
    if (*estimate) cmd_estimate(config);
    if (*sweep) {
      grid.windows = parse_int_range(w_range);
      grid.missing = parse_int_range(m_range);
      cmd_sweep(config, grid);
    }
    if (*summarize) cmd_summarize(config);
    if (*synth) cmd_synth(synth_config, config.out, seed);
    return kSuccess;
  } catch (const ParseError& e) {
    return report_error(e.kind(), e.what(), kValidationFailure);
  } catch (const SchemaError& e) {
    return report_error(e.kind(), e.what(), kValidationFailure);
  } catch (const ValidationError& e) {
    return report_error(e.kind(), e.what(), kValidationFailure);
  } catch (const Error& e) {
    return report_error(e.kind(), e.what(), kRuntimeError);
  } catch (const std::exception& e) {
    return report_error("runtime", e.what(), kRuntimeError);
  }
}

}  // namespace flusurv::cli
