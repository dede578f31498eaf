#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "flusurv/survey_data.hpp"

namespace flusurv {

// Target distribution of one categorical variable.
struct MarginSpec {
  std::string variable;                 // "age" or "location"
  std::vector<std::string> categories;
  std::vector<double> targets;          // proportions, sum to 1

  // Throws ValidationError for negative targets, size mismatch or a sum that
  // is not 1 within 1e-12.
  void validate() const;
};

// A set of reference regions analysed together. An empty region list means
// the whole country.
struct Scope {
  std::string label = "national";
  std::vector<std::string> regions;

  static Scope national();
  // "national", a region name, or several region names joined by '|'.
  // Regions must exist in `reference` (ValidationError otherwise).
  static Scope parse(std::string_view spec, const ReferencePopulation& reference);
  // Every reference region not in `other`.
  static Scope complement(const Scope& other, const ReferencePopulation& reference,
                          std::string label);

  bool is_national() const { return regions.empty(); }
  bool includes(std::string_view region) const;
};

// Age targets for `scope`: reference counts summed over the scope's regions
// and over the 5-year groups inside each band, then normalised. Throws
// SchemaError when a band is not a union of the reference groups and
// ConfigError for an empty scope.
MarginSpec build_margins(const ReferencePopulation& reference,
                         const AgeBands& bands, const Scope& scope);

// Location targets over the regions of a scope.
MarginSpec build_location_margin(const ReferencePopulation& reference,
                                 const Scope& scope);

struct RakeOptions {
  double tol = 1e-9;   // max |weighted proportion - target|
  int max_iter = 50;   // full passes over all margins
  bool strict_cells = false;  // empty category with positive target is an error
};

struct CategoryCollapse {
  std::string variable;
  std::string category;  // empty in the sample
  std::string into;      // nearest non-empty neighbour that absorbed its target
};

struct RakeResult {
  std::vector<double> weights;  // normalised so the sum equals the row count
  int iterations = 0;
  bool converged = false;
  double max_deviation = 0;
  std::vector<CategoryCollapse> collapsed;
  std::vector<std::string> warnings;
};

// Iterative proportional fitting. `labels[m][i]` is the category index of
// row i under margin m. Starting from unit weights, each pass rescales the
// weights margin by margin until every weighted marginal proportion is
// within `tol` of its target or `max_iter` passes have run.
RakeResult rake(std::span<const std::vector<int>> labels,
                std::span<const MarginSpec> margins, const RakeOptions& options = {});

struct WeightingConfig {
  AgeBands bands = AgeBands::five_year();
  Scope scope = Scope::national();
  bool location_margin = false;  // also rake to the scope's regional totals
  RakeOptions rake;
};

struct WeightTable {
  SurveyWeek week;
  std::string scope;
  std::vector<std::size_t> rows;  // response-table rows, aligned with weights
  RakeResult fit;
  std::size_t missing_demographics = 0;  // in-week rows dropped for missing age/region
};

// Rakes the `include`d responses of `week` that fall in the configured scope.
// An empty in-scope sample yields an empty table with a warning.
WeightTable weekly_weights(const ResponseTable& responses,
                           std::span<const std::uint8_t> include,
                           const ParticipantTable& participants,
                           const ReferencePopulation& reference,
                           const WeightingConfig& config, SurveyWeek week);

// weekly_weights for every week of the response universe.
std::vector<WeightTable> weights_by_week(const ResponseTable& responses,
                                         std::span<const std::uint8_t> include,
                                         const ParticipantTable& participants,
                                         const ReferencePopulation& reference,
                                         const WeightingConfig& config);

// Scatters weight tables into one weight per response row; rows that were not
// weighted get NaN.
std::vector<double> response_weights(std::size_t rows,
                                     std::span<const WeightTable> tables);

// weights.csv: participant_id,week_ending,scope,weight
void write_weights(std::ostream& out, const ResponseTable& responses,
                   std::span<const WeightTable> tables);

}  // namespace flusurv
