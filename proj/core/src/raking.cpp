#include "flusurv/raking.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include <spdlog/spdlog.h>

#include "flusurv/csv.hpp"
#include "flusurv/errors.hpp"

namespace flusurv {

void MarginSpec::validate() const {
  if (categories.size() != targets.size()) {
    throw ValidationError("margin '" + variable + "': categories and targets differ in size");
  }
  if (categories.empty()) throw ValidationError("margin '" + variable + "' is empty");
  double sum = 0;
  for (double t : targets) {
    if (!std::isfinite(t) || t < 0) {
      throw ValidationError("margin '" + variable + "': negative target");
    }
    sum += t;
  }
  if (std::abs(sum - 1.0) > 1e-12) {
    throw ValidationError("margin '" + variable + "': targets sum to " +
                          std::to_string(sum) + ", not 1");
  }
}

// --- Scope --------------------------------------------------------------

Scope Scope::national() { return Scope{}; }

Scope Scope::parse(std::string_view spec, const ReferencePopulation& reference) {
  std::string lowered(spec);
  std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lowered == "national") return national();

  Scope scope;
  scope.label = std::string(spec);
  std::size_t start = 0;
  while (start <= spec.size()) {
    auto end = spec.find('|', start);
    if (end == std::string_view::npos) end = spec.size();
    std::string region(spec.substr(start, end - start));
    if (!region.empty()) {
      if (!reference.has_region(region)) {
        throw ValidationError("scope region '" + region +
                              "' is not in the reference population");
      }
      scope.regions.push_back(std::move(region));
    }
    start = end + 1;
  }
  if (scope.regions.empty()) throw ConfigError("empty scope '" + scope.label + "'");
  std::sort(scope.regions.begin(), scope.regions.end());
  scope.regions.erase(std::unique(scope.regions.begin(), scope.regions.end()),
                      scope.regions.end());
  return scope;
}

Scope Scope::complement(const Scope& other, const ReferencePopulation& reference,
                        std::string label) {
  Scope scope;
  scope.label = std::move(label);
  for (auto& r : reference.regions()) {
    if (!other.is_national() && !other.includes(r)) scope.regions.push_back(r);
  }
  if (scope.regions.empty()) {
    throw ConfigError("scope '" + scope.label + "' has no regions");
  }
  return scope;
}

bool Scope::includes(std::string_view region) const {
  if (is_national()) return true;
  return std::binary_search(regions.begin(), regions.end(), region);
}

// --- Margins ------------------------------------------------------------

MarginSpec build_margins(const ReferencePopulation& reference,
                         const AgeBands& bands, const Scope& scope) {
  MarginSpec margin;
  margin.variable = "age";
  for (const auto& b : bands.bands()) margin.categories.push_back(b.label());
  margin.targets.assign(bands.size(), 0.0);

  bool any = false;
  for (const auto& e : reference.entries()) {
    if (!scope.includes(e.region)) continue;
    any = true;
    std::size_t hit = bands.size();
    for (std::size_t b = 0; b < bands.size(); ++b) {
      if (bands[b].covers(e.group)) {
        hit = b;
        break;
      }
    }
    if (hit == bands.size()) {
      throw SchemaError("age bands cannot be expressed as unions of reference group '" +
                        e.group.label() + "'");
    }
    margin.targets[hit] += e.count;
  }
  if (!any) throw ConfigError("scope '" + scope.label + "' matches no reference rows");

  const double total = std::accumulate(margin.targets.begin(), margin.targets.end(), 0.0);
  if (!(total > 0)) {
    throw ValidationError("reference population for scope '" + scope.label +
                          "' is zero");
  }
  for (auto& t : margin.targets) t /= total;
  return margin;
}

MarginSpec build_location_margin(const ReferencePopulation& reference,
                                 const Scope& scope) {
  std::map<std::string, double> totals;
  for (const auto& e : reference.entries()) {
    if (scope.includes(e.region)) totals[e.region] += e.count;
  }
  if (totals.empty()) throw ConfigError("scope '" + scope.label + "' matches no reference rows");
  MarginSpec margin;
  margin.variable = "location";
  double sum = 0;
  for (const auto& [region, count] : totals) {
    margin.categories.push_back(region);
    margin.targets.push_back(count);
    sum += count;
  }
  if (!(sum > 0)) throw ValidationError("reference population for scope is zero");
  for (auto& t : margin.targets) t /= sum;
  return margin;
}

// --- IPF ----------------------------------------------------------------

namespace {

// Moves the target of each empty category onto its nearest non-empty
// neighbour (lower index wins ties).
std::vector<double> collapse_empty(const MarginSpec& margin,
                                   const std::vector<std::size_t>& counts,
                                   const RakeOptions& options, RakeResult& result) {
  std::vector<double> targets = margin.targets;
  const std::size_t k = targets.size();
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] > 0 && targets[c] <= 0) {
      throw ValidationError("margin '" + margin.variable + "': sample rows in category '" +
                            margin.categories[c] + "' whose target is zero");
    }
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] > 0 || margin.targets[c] <= 0) continue;
    if (options.strict_cells) {
      throw ValidationError("margin '" + margin.variable + "': category '" +
                            margin.categories[c] +
                            "' has a positive target but no sample rows");
    }
    std::size_t into = k;
    for (std::size_t d = 1; d < k && into == k; ++d) {
      if (c >= d && counts[c - d] > 0) into = c - d;
      else if (c + d < k && counts[c + d] > 0) into = c + d;
    }
    targets[into] += targets[c];
    targets[c] = 0;
    result.collapsed.push_back(
        {margin.variable, margin.categories[c], margin.categories[into]});
    result.warnings.push_back("margin '" + margin.variable + "': empty category '" +
                              margin.categories[c] + "' collapsed into '" +
                              margin.categories[into] + "'");
  }
  return targets;
}

double max_deviation(const std::vector<std::vector<int>>& labels,
                     const std::vector<std::vector<double>>& targets,
                     const std::vector<double>& w) {
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  double worst = 0;
  for (std::size_t m = 0; m < labels.size(); ++m) {
    std::vector<double> sums(targets[m].size(), 0.0);
    for (std::size_t i = 0; i < w.size(); ++i) sums[labels[m][i]] += w[i];
    for (std::size_t c = 0; c < sums.size(); ++c) {
      worst = std::max(worst, std::abs(sums[c] / total - targets[m][c]));
    }
  }
  return worst;
}

}  // namespace

RakeResult rake(std::span<const std::vector<int>> labels,
                std::span<const MarginSpec> margins, const RakeOptions& options) {
  if (labels.size() != margins.size()) {
    throw ContractViolation("rake: one label vector per margin required");
  }
  RakeResult result;
  if (margins.empty()) throw ContractViolation("rake: no margins");
  const std::size_t n = labels[0].size();
  for (const auto& l : labels) {
    if (l.size() != n) throw ContractViolation("rake: label vectors differ in length");
  }
  if (n == 0) {
    result.converged = true;
    result.warnings.push_back("empty sample");
    return result;
  }

  std::vector<std::vector<int>> cats(labels.begin(), labels.end());
  std::vector<std::vector<double>> targets;
  for (std::size_t m = 0; m < margins.size(); ++m) {
    margins[m].validate();
    std::vector<std::size_t> counts(margins[m].targets.size(), 0);
    for (int c : cats[m]) {
      if (c < 0 || static_cast<std::size_t>(c) >= counts.size()) {
        throw ContractViolation("rake: row category outside margin '" +
                                margins[m].variable + "'");
      }
      ++counts[static_cast<std::size_t>(c)];
    }
    targets.push_back(collapse_empty(margins[m], counts, options, result));
  }

  std::vector<double> w(n, 1.0);
  for (int iter = 1; iter <= options.max_iter; ++iter) {
    for (std::size_t m = 0; m < cats.size(); ++m) {
      const double total = std::accumulate(w.begin(), w.end(), 0.0);
      std::vector<double> sums(targets[m].size(), 0.0);
      for (std::size_t i = 0; i < n; ++i) sums[cats[m][i]] += w[i];
      std::vector<double> factor(sums.size(), 0.0);
      for (std::size_t c = 0; c < sums.size(); ++c) {
        if (sums[c] > 0) factor[c] = targets[m][c] * total / sums[c];
      }
      for (std::size_t i = 0; i < n; ++i) w[i] *= factor[cats[m][i]];
    }
    result.iterations = iter;
    result.max_deviation = max_deviation(cats, targets, w);
    if (result.max_deviation < options.tol) {
      result.converged = true;
      break;
    }
  }

  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  const double scale = static_cast<double>(n) / total;
  for (auto& x : w) x *= scale;
  result.weights = std::move(w);
  if (!result.converged) {
    result.warnings.push_back("raking did not converge after " +
                              std::to_string(options.max_iter) +
                              " iterations (max deviation " +
                              std::to_string(result.max_deviation) + ")");
  }
  return result;
}

// --- Weekly weights -----------------------------------------------------

namespace {

struct Prepared {
  std::vector<MarginSpec> margins;
};

Prepared prepare(const ReferencePopulation& reference, const WeightingConfig& config) {
  Prepared p;
  p.margins.push_back(build_margins(reference, config.bands, config.scope));
  if (config.location_margin) {
    p.margins.push_back(build_location_margin(reference, config.scope));
  }
  return p;
}

WeightTable weigh_rows(const ResponseTable& responses,
                       const std::vector<std::size_t>& candidates,
                       const ParticipantTable& participants,
                       const WeightingConfig& config, const Prepared& prep,
                       SurveyWeek week) {
  WeightTable table;
  table.week = week;
  table.scope = config.scope.label;
  const bool need_region = !config.scope.is_national() || config.location_margin;

  std::vector<std::vector<int>> labels(prep.margins.size());
  for (std::size_t row : candidates) {
    const Participant* p = participants.find(responses[row].participant_id);
    if (!p || !p->age_years || (need_region && !p->region)) {
      ++table.missing_demographics;
      continue;
    }
    if (p->region && !config.scope.includes(*p->region)) continue;
    const auto band = config.bands.index_of(*p->age_years);
    labels[0].push_back(static_cast<int>(*band));
    if (config.location_margin) {
      const auto& cats = prep.margins[1].categories;
      const auto it = std::find(cats.begin(), cats.end(), *p->region);
      labels[1].push_back(static_cast<int>(it - cats.begin()));
    }
    table.rows.push_back(row);
  }

  if (table.rows.empty()) {
    table.fit.converged = true;
    table.fit.warnings.push_back("no responses in scope '" + table.scope +
                                 "' for week " + week.iso());
    return table;
  }
  table.fit = rake(labels, prep.margins, config.rake);
  for (const auto& w : table.fit.warnings) {
    spdlog::debug("week {} scope {}: {}", week.iso(), table.scope, w);
  }
  return table;
}

}  // namespace

WeightTable weekly_weights(const ResponseTable& responses,
                           std::span<const std::uint8_t> include,
                           const ParticipantTable& participants,
                           const ReferencePopulation& reference,
                           const WeightingConfig& config, SurveyWeek week) {
  if (include.size() != responses.size()) {
    throw ContractViolation("inclusion mask does not match response table");
  }
  if (!responses.weeks().contains(week)) {
    throw ContractViolation("week " + week.iso() + " is outside the data");
  }
  const auto prep = prepare(reference, config);
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < responses.size(); ++i) {
    if (include[i] && responses[i].week == week) rows.push_back(i);
  }
  return weigh_rows(responses, rows, participants, config, prep, week);
}

std::vector<WeightTable> weights_by_week(const ResponseTable& responses,
                                         std::span<const std::uint8_t> include,
                                         const ParticipantTable& participants,
                                         const ReferencePopulation& reference,
                                         const WeightingConfig& config) {
  if (include.size() != responses.size()) {
    throw ContractViolation("inclusion mask does not match response table");
  }
  const auto prep = prepare(reference, config);
  const auto& weeks = responses.weeks();
  std::vector<std::vector<std::size_t>> by_week(weeks.count());
  for (std::size_t i = 0; i < responses.size(); ++i) {
    if (include[i]) by_week[weeks.offset(responses[i].week)].push_back(i);
  }
  std::vector<WeightTable> out;
  out.reserve(by_week.size());
  std::size_t missing = 0, unconverged = 0, collapsed = 0;
  for (std::size_t k = 0; k < by_week.size(); ++k) {
    out.push_back(weigh_rows(responses, by_week[k], participants, config, prep,
                             weeks.at(k)));
    missing += out.back().missing_demographics;
    unconverged += !out.back().fit.converged;
    collapsed += out.back().fit.collapsed.size();
  }
  if (missing) spdlog::warn("{} responses excluded from weighting: missing demographics", missing);
  if (unconverged) spdlog::warn("{} week(s) did not converge when raking", unconverged);
  if (collapsed) spdlog::warn("{} empty age-band cell(s) collapsed while raking", collapsed);
  return out;
}

std::vector<double> response_weights(std::size_t rows,
                                     std::span<const WeightTable> tables) {
  std::vector<double> w(rows, std::numeric_limits<double>::quiet_NaN());
  for (const auto& t : tables) {
    for (std::size_t j = 0; j < t.rows.size(); ++j) w[t.rows[j]] = t.fit.weights[j];
  }
  return w;
}

void write_weights(std::ostream& out, const ResponseTable& responses,
                   std::span<const WeightTable> tables) {
  out << csv::kSchemaLine << '\n';
  csv::write_row(out, {"participant_id", "week_ending", "scope", "weight"});
  for (const auto& t : tables) {
    for (std::size_t j = 0; j < t.rows.size(); ++j) {
      const auto& r = responses[t.rows[j]];
      csv::write_row(out, {r.participant_id, r.week.iso(), t.scope,
                           csv::format_number(t.fit.weights[j])});
    }
  }
}

}  // namespace flusurv
