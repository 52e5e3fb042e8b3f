#pragma once

// Independent reference implementations for tests. These deliberately take
// different numerical routes from the library code they check.

#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <vector>

namespace copaint::testing {

struct OracleCorrelation {
  double r = 0.0;
  double p = 1.0;
};

/// Raw-sum Pearson formula in extended precision; p from Boost's
/// incomplete-beta based t distribution.
inline OracleCorrelation pearson_oracle(const std::vector<double>& xs, const std::vector<double>& ys) {
  const long double n = static_cast<long double>(xs.size());
  long double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const long double x = xs[i], y = ys[i];
    sx += x;
    sy += y;
    sxx += x * x;
    syy += y * y;
    sxy += x * y;
  }
  const long double r = (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
  OracleCorrelation out;
  out.r = static_cast<double>(r);
  if (std::fabs(r) >= 1.0L) {
    out.p = 0.0;
    return out;
  }
  const double df = static_cast<double>(n) - 2;
  const double t = static_cast<double>(r * std::sqrt((n - 2) / (1 - r * r)));
  boost::math::students_t dist(df);
  out.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t)));
  return out;
}

}  // namespace copaint::testing
