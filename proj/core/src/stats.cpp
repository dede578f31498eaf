#include "flusurv/stats.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/distributions/normal.hpp>

#include "flusurv/errors.hpp"

namespace flusurv::stats {

double logit(double p) { return std::log(p / (1.0 - p)); }

double inv_logit(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_two_sided_quantile(double level) {
  if (!(level > 0 && level < 1)) throw ConfigError("confidence level must be in (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>{},
                               0.5 + level / 2.0);
}

double two_sided_p(double z) {
  return std::min(1.0, std::erfc(std::abs(z) / std::sqrt(2.0)));
}

double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw ContractViolation("quantile of empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double quantile(std::vector<double> values, double q) {
  std::sort(values.begin(), values.end());
  return quantile_sorted(values, q);
}

BoxSummary box_summary(std::vector<double> values) {
  BoxSummary s;
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  s.count = values.size();
  s.min = values.front();
  s.max = values.back();
  s.q1 = quantile_sorted(values, 0.25);
  s.median = quantile_sorted(values, 0.5);
  s.q3 = quantile_sorted(values, 0.75);
  return s;
}

}  // namespace flusurv::stats
