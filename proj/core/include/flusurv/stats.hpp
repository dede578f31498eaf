#pragma once

#include <span>
#include <vector>

namespace flusurv::stats {

double logit(double p);
double inv_logit(double x);

double normal_cdf(double x);
// Upper quantile for a two-sided interval: level 0.95 gives 1.959964...
double normal_two_sided_quantile(double level);
// Two-sided p-value of a standard normal statistic.
double two_sided_p(double z);

// Sample quantile with linear interpolation between order statistics
// (Hyndman-Fan type 7). `sorted` must be ascending and non-empty.
double quantile_sorted(std::span<const double> sorted, double q);
double quantile(std::vector<double> values, double q);

struct BoxSummary {
  std::size_t count = 0;
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
};
// Empty input gives count == 0 and zeros elsewhere.
BoxSummary box_summary(std::vector<double> values);

}  // namespace flusurv::stats
