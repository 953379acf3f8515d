#pragma once

#include <span>
#include <vector>

namespace hashtag::stats {

// Ranks starting at 1; tied values share the average of their ranks.
std::vector<double> average_ranks(std::span<const double> values);

double pearson_correlation(std::span<const double> x, std::span<const double> y);

// Pearson correlation of the average ranks. Returns 0 when either side is
// constant.
double spearman(std::span<const double> x, std::span<const double> y);

double median(std::vector<double> values);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};
LinearFit linear_fit(std::span<const double> x, std::span<const double> y);

}  // namespace hashtag::stats
