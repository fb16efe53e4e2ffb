#pragma once

#include <cmath>
#include <numeric>
#include <span>
#include <vector>

namespace hic::test {

inline double mean(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

inline double stddev(std::span<const double> v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / (v.size() - 1));
}

inline double chi_square(std::span<const double> observed, double expected_each) {
  double c = 0.0;
  for (double o : observed) c += (o - expected_each) * (o - expected_each) / expected_each;
  return c;
}

// Upper 1% points of the chi-square distribution.
inline double chi2_crit_1pct(int dof) {
  switch (dof) {
    case 1: return 6.635;
    case 5: return 15.086;
    case 23: return 41.638;
    case 35: return 57.342;
    default: return dof + 2.326 * std::sqrt(2.0 * dof) + 2.0;  // normal approximation
  }
}

}  // namespace hic::test
