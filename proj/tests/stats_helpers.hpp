#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace sdeadapt::testing {

inline double mean(const std::vector<double>& xs) {
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

inline double variance(const std::vector<double>& xs) {
  const double mu = mean(xs);
  double acc = 0.0;
  for (double x : xs) acc += (x - mu) * (x - mu);
  return acc / static_cast<double>(xs.size() - 1);
}

inline double correlation(const std::vector<double>& xs, const std::vector<double>& ys) {
  const double mx = mean(xs);
  const double my = mean(ys);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

/// sqrt(n) * sup |F_n - Phi| for a sample against the standard normal.
inline double ks_statistic_normal(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double cdf = 0.5 * std::erfc(-xs[i] / std::sqrt(2.0));
    d = std::max({d, (i + 1) / n - cdf, cdf - i / n});
  }
  return d * std::sqrt(n);
}

/// Asymptotic Kolmogorov critical value at significance 0.001.
inline constexpr double kKsCritical001 = 1.9495;

}  // namespace sdeadapt::testing
