#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace flusurv::cli {

enum ExitCode : int {
  kSuccess = 0,
  kValidationFailure = 1,
  kRuntimeError = 2,
};

struct InputPaths {
  std::filesystem::path responses;
  std::filesystem::path participants;
  std::filesystem::path reference;
};

struct RunConfig {
  InputPaths inputs;
  std::vector<std::string> groupings = {"CLI1+", "CLI2+", "ILI"};
  int window = 4;
  int missing = 1;
  bool lenient_warmup = false;
  bool trim_warmup = false;
  bool use_consistency = true;
  bool use_weights = true;
  std::string scope = "national";
  std::string compare;         // second scope; "rest" is the complement of `scope`
  std::string bands;           // raking bands; empty: the reference's 5-year groups
  std::string by_age;          // split estimates by these bands
  bool location_margin = false;
  bool strict_cells = false;
  double ci_level = 0.95;
  bool adjustment = false;     // also write adjustment_effect.csv
  bool export_debug = false;   // incidents.csv, consistency_marks.csv, weights.csv
  std::filesystem::path out = ".";
};

struct SweepGrid {
  std::vector<int> windows = {1, 2, 3, 4, 5, 6, 7, 8};
  std::vector<int> missing = {0, 1, 2};
  double threshold = 0.25;
  bool weighting = false;
};

// Parses "a..b" or a comma separated list of integers.
std::vector<int> parse_int_range(const std::string& text);

// Writes a human-readable report; returns kSuccess or kValidationFailure.
int cmd_validate(const InputPaths& inputs, std::ostream& report);
void cmd_estimate(const RunConfig& config);
void cmd_sweep(const RunConfig& config, const SweepGrid& grid);
void cmd_summarize(const RunConfig& config);
void cmd_synth(const std::filesystem::path& config_path,
               const std::filesystem::path& out, std::optional<std::uint64_t> seed);

// Full command line entry point. Errors are reported as one JSON object on
// stderr and mapped to exit codes.
int run(int argc, char** argv);

}  // namespace flusurv::cli
