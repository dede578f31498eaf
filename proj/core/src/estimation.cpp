#include "flusurv/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include <spdlog/spdlog.h>

#include "flusurv/csv.hpp"
#include "flusurv/errors.hpp"
#include "flusurv/stats.hpp"

namespace flusurv {

std::string_view to_string(CiMethod method) {
  switch (method) {
    case CiMethod::kLogit:
      return "logit";
    case CiMethod::kExactFallback:
      return "exact_fallback";
  }
  return "unknown";
}

double weighted_proportion(std::span<const double> y, std::span<const double> w) {
  if (y.empty()) throw ContractViolation("weighted proportion of an empty cell");
  if (y.size() != w.size()) throw ContractViolation("y and w differ in length");
  double num = 0, den = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!(w[i] > 0) || !std::isfinite(w[i])) {
      throw ContractViolation("weights must be positive and finite");
    }
    num += w[i] * y[i];
    den += w[i];
  }
  return num / den;
}

std::optional<double> linearized_variance(std::span<const double> y,
                                          std::span<const double> w, double p_hat) {
  const std::size_t n = y.size();
  if (n < 2) return std::nullopt;
  if (w.size() != n) throw ContractViolation("y and w differ in length");
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  std::vector<double> z(n);
  for (std::size_t i = 0; i < n; ++i) z[i] = w[i] * (y[i] - p_hat) / total;
  const double mean = std::accumulate(z.begin(), z.end(), 0.0) / static_cast<double>(n);
  double ss = 0;
  for (double zi : z) ss += (zi - mean) * (zi - mean);
  return static_cast<double>(n) / static_cast<double>(n - 1) * ss;
}

Interval logit_ci(double p_hat, double variance, double level) {
  if (!(p_hat > 0 && p_hat < 1)) {
    throw ContractViolation("logit interval needs 0 < p_hat < 1");
  }
  if (variance < 0) throw ContractViolation("negative variance");
  const double z = stats::normal_two_sided_quantile(level);
  const double se = std::sqrt(variance) / (p_hat * (1.0 - p_hat));
  const double centre = stats::logit(p_hat);
  if (se == 0) return {p_hat, p_hat};
  return {stats::inv_logit(centre - z * se), stats::inv_logit(centre + z * se)};
}

Interval exact_fallback_ci(double p_hat, double n_eff, double level) {
  if (!(n_eff > 0)) throw ContractViolation("effective sample size must be positive");
  const double tail = (1.0 - level) / 2.0;
  if (p_hat <= 0) return {0.0, 1.0 - std::pow(tail, 1.0 / n_eff)};
  if (p_hat >= 1) return {std::pow(tail, 1.0 / n_eff), 1.0};
  throw ContractViolation("exact fallback applies only to p_hat in {0, 1}");
}

std::optional<double> EstimateCell::se_logit() const {
  if (method != CiMethod::kLogit || !variance || !(p_hat > 0 && p_hat < 1)) {
    return std::nullopt;
  }
  return std::sqrt(*variance) / (p_hat * (1.0 - p_hat));
}

EstimateCell estimate_cell(std::span<const double> y, std::span<const double> w,
                           double level) {
  EstimateCell cell;
  cell.p_hat = weighted_proportion(y, w);
  cell.n = y.size();
  for (double wi : w) {
    cell.sum_w += wi;
    cell.sum_w2 += wi * wi;
  }
  cell.variance = linearized_variance(y, w, cell.p_hat);
  if (cell.p_hat > 0 && cell.p_hat < 1) {
    const auto ci = logit_ci(cell.p_hat, *cell.variance, level);
    cell.ci_low = std::min(ci.low, cell.p_hat);
    cell.ci_high = std::max(ci.high, cell.p_hat);
    cell.method = CiMethod::kLogit;
  } else {
    const auto ci = exact_fallback_ci(cell.p_hat, cell.n_eff(), level);
    cell.ci_low = ci.low;
    cell.ci_high = ci.high;
    cell.method = CiMethod::kExactFallback;
  }
  return cell;
}

std::vector<EstimateCell> estimate_by(const ResponseTable& responses,
                                      std::span<const OnsetTable> onsets,
                                      std::span<const double> weights,
                                      const FactorSpec& factors, double level) {
  if (weights.size() != responses.size()) {
    throw ContractViolation("weights do not match response table");
  }
  if (factors.age_bands && !factors.participants) {
    throw ContractViolation("age-band factor requires participants");
  }
  const auto& weeks = responses.weeks();

  // Factor slot per row: age band index, or 0 when not split by age. Rows
  // without a usable age are dropped from age-split estimates.
  std::vector<int> slot(responses.size(), 0);
  std::size_t dropped = 0;
  for (std::size_t i = 0; i < responses.size(); ++i) {
    if (!std::isfinite(weights[i])) {
      slot[i] = -1;
      continue;
    }
    if (factors.age_bands) {
      const Participant* p = factors.participants->find(responses[i].participant_id);
      if (!p || !p->age_years) {
        slot[i] = -1;
        ++dropped;
        continue;
      }
      slot[i] = static_cast<int>(*factors.age_bands->index_of(*p->age_years));
    }
  }
  if (dropped) spdlog::warn("{} responses without age left out of age-band estimates", dropped);

  std::string factor_name = "all";
  if (factors.age_bands && !factors.location.empty()) factor_name = "location:age_band";
  else if (factors.age_bands) factor_name = "age_band";
  else if (!factors.location.empty()) factor_name = "location";
  const std::size_t slots = factors.age_bands ? factors.age_bands->size() : 1;

  std::vector<EstimateCell> cells;
  for (const auto& onset : onsets) {
    if (onset.is_onset.size() != responses.size()) {
      throw ContractViolation("onset table does not match response table");
    }
    std::map<std::pair<std::size_t, int>, std::pair<std::vector<double>, std::vector<double>>> groups;
    for (std::size_t i = 0; i < responses.size(); ++i) {
      if (slot[i] < 0) continue;
      auto& [y, w] = groups[{weeks.offset(responses[i].week), slot[i]}];
      y.push_back(onset.is_onset[i] ? 1.0 : 0.0);
      w.push_back(weights[i]);
    }
    for (std::size_t k = 0; k < weeks.count(); ++k) {
      for (std::size_t s = 0; s < slots; ++s) {
        auto it = groups.find({k, static_cast<int>(s)});
        if (it == groups.end()) {
          spdlog::debug("empty cell {} {} slot {} skipped", onset.grouping,
                        weeks.at(k).iso(), s);
          continue;
        }
        auto cell = estimate_cell(it->second.first, it->second.second, level);
        cell.grouping = onset.grouping;
        cell.week = weeks.at(k);
        cell.factor_name = factor_name;
        std::string value;
        if (!factors.location.empty()) value = factors.location;
        if (factors.age_bands) {
          if (!value.empty()) value += ':';
          value += (*factors.age_bands)[s].label();
        }
        cell.factor_value = value.empty() ? "all" : value;
        cells.push_back(std::move(cell));
      }
    }
  }
  return cells;
}

GroupComparison compare_groups(const EstimateCell& a, const EstimateCell& b,
                               double alpha) {
  GroupComparison cmp{a, b, std::nullopt, std::nullopt, false};
  const auto se_a = a.se_logit();
  const auto se_b = b.se_logit();
  if (!se_a || !se_b) return cmp;
  const double se = std::sqrt(*se_a * *se_a + *se_b * *se_b);
  if (!(se > 0)) return cmp;
  cmp.z = (stats::logit(a.p_hat) - stats::logit(b.p_hat)) / se;
  cmp.p_value = stats::two_sided_p(*cmp.z);
  cmp.significant = *cmp.p_value < alpha;
  return cmp;
}

std::vector<GroupComparison> compare_cells(std::span<const EstimateCell> a,
                                           std::span<const EstimateCell> b,
                                           double alpha) {
  // Factor values of the two runs differ only in their location prefix.
  const auto age_part = [](const EstimateCell& c) {
    const auto colon = c.factor_value.find(':');
    return c.factor_name == "location" ? std::string("all")
           : colon == std::string::npos ? c.factor_value
                                        : c.factor_value.substr(colon + 1);
  };
  std::map<std::tuple<std::string, SurveyWeek, std::string>, const EstimateCell*> index;
  for (const auto& c : b) index[{c.grouping, c.week, age_part(c)}] = &c;
  std::vector<GroupComparison> out;
  for (const auto& c : a) {
    auto it = index.find({c.grouping, c.week, age_part(c)});
    if (it != index.end()) out.push_back(compare_groups(c, *it->second, alpha));
  }
  return out;
}

std::vector<std::uint8_t> scope_mask(const ResponseTable& responses,
                                     const ParticipantTable& participants,
                                     const Scope& scope) {
  std::vector<std::uint8_t> mask(responses.size(), 1);
  if (scope.is_national()) return mask;
  for (std::size_t i = 0; i < responses.size(); ++i) {
    const Participant* p = participants.find(responses[i].participant_id);
    mask[i] = p && p->region && scope.includes(*p->region);
  }
  return mask;
}

std::vector<double> unit_weights(std::span<const std::uint8_t> mask) {
  std::vector<double> w(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    w[i] = mask[i] ? 1.0 : std::numeric_limits<double>::quiet_NaN();
  }
  return w;
}

std::vector<AdjustmentRow> adjustment_effect(const ResponseTable& responses,
                                             const ParticipantTable& participants,
                                             const ReferencePopulation& reference,
                                             const ConsistencyParams& params,
                                             const WeightingConfig& weighting,
                                             std::span<const SymptomGrouping> groupings) {
  std::vector<OnsetTable> onsets;
  for (const auto& g : groupings) onsets.push_back(mark_onsets(responses, g));

  const auto in_scope = scope_mask(responses, participants, weighting.scope);
  const auto marks = mark_consistency(responses, params);
  std::vector<std::uint8_t> consistent(responses.size());
  for (std::size_t i = 0; i < responses.size(); ++i) {
    consistent[i] = in_scope[i] && marks.consistent[i];
  }

  const auto all_tables =
      weights_by_week(responses, in_scope, participants, reference, weighting);
  const auto consistent_tables =
      weights_by_week(responses, consistent, participants, reference, weighting);

  const FactorSpec none;
  const auto naive = estimate_by(responses, onsets, unit_weights(in_scope), none);
  const auto cons = estimate_by(responses, onsets, unit_weights(consistent), none);
  const auto wtd = estimate_by(responses, onsets,
                               response_weights(responses.size(), all_tables), none);
  const auto both = estimate_by(
      responses, onsets, response_weights(responses.size(), consistent_tables), none);

  const auto& weeks = responses.weeks();
  std::vector<AdjustmentRow> rows;
  std::map<std::pair<std::string, SurveyWeek>, std::size_t> at;
  for (const auto& g : groupings) {
    for (std::size_t k = 0; k < weeks.count(); ++k) {
      at[{g.name, weeks.at(k)}] = rows.size();
      rows.push_back({g.name, weeks.at(k), {}, {}, {}, {}, {}, {}, {}});
    }
  }
  const auto fill = [&](const std::vector<EstimateCell>& cells,
                        std::optional<double> AdjustmentRow::*field) {
    for (const auto& c : cells) rows[at.at({c.grouping, c.week})].*field = c.p_hat;
  };
  fill(naive, &AdjustmentRow::naive);
  fill(cons, &AdjustmentRow::consistent_only);
  fill(wtd, &AdjustmentRow::weighted_only);
  fill(both, &AdjustmentRow::both);

  const auto relative = [](const std::optional<double>& adjusted,
                           const std::optional<double>& base) -> std::optional<double> {
    if (!adjusted || !base || !(*base > 0)) return std::nullopt;
    return (*adjusted - *base) / *base;
  };
  for (auto& r : rows) {
    r.rel_consistent_only = relative(r.consistent_only, r.naive);
    r.rel_weighted_only = relative(r.weighted_only, r.naive);
    r.rel_both = relative(r.both, r.naive);
  }
  return rows;
}

namespace {

std::string opt_number(const std::optional<double>& v) {
  return v ? csv::format_number(*v) : "NA";
}

}  // namespace

void write_estimates(std::ostream& out, std::span<const EstimateCell> cells) {
  out << csv::kSchemaLine << '\n';
  csv::write_row(out, {"grouping", "week_ending", "factor_name", "factor_value", "n",
                       "p_hat", "ci_low", "ci_high", "method"});
  for (const auto& c : cells) {
    csv::write_row(out, {c.grouping, c.week.iso(), c.factor_name, c.factor_value,
                         std::to_string(c.n), csv::format_number(c.p_hat),
                         csv::format_number(c.ci_low), csv::format_number(c.ci_high),
                         std::string(to_string(c.method))});
  }
}

void write_comparisons(std::ostream& out, std::span<const GroupComparison> comparisons) {
  out << csv::kSchemaLine << '\n';
  csv::write_row(out, {"grouping", "week_ending", "factor_value_a", "factor_value_b",
                       "p_hat_a", "p_hat_b", "z", "p_value", "significant"});
  for (const auto& c : comparisons) {
    csv::write_row(out, {c.a.grouping, c.a.week.iso(), c.a.factor_value,
                         c.b.factor_value, csv::format_number(c.a.p_hat),
                         csv::format_number(c.b.p_hat), opt_number(c.z),
                         opt_number(c.p_value),
                         c.indeterminate() ? "NA" : (c.significant ? "1" : "0")});
  }
}

void write_adjustment_effect(std::ostream& out, std::span<const AdjustmentRow> rows) {
  out << csv::kSchemaLine << '\n';
  csv::write_row(out, {"grouping", "week_ending", "naive", "consistent_only",
                       "weighted_only", "both", "rel_consistent_only",
                       "rel_weighted_only", "rel_both"});
  for (const auto& r : rows) {
    csv::write_row(out, {r.grouping, r.week.iso(), opt_number(r.naive),
                         opt_number(r.consistent_only), opt_number(r.weighted_only),
                         opt_number(r.both), opt_number(r.rel_consistent_only),
                         opt_number(r.rel_weighted_only), opt_number(r.rel_both)});
  }
}

}  // namespace flusurv
