#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace mvsde {

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  std::size_t points = 0;
};

/// Ordinary least squares y = intercept + slope * x.
LineFit fit_line(std::span<const double> x, std::span<const double> y);

/// OLS on (log x, log y). Points with non-positive coordinates are skipped.
/// With `drop_endpoints` the smallest and largest x are discarded first
/// (only if at least four points remain usable).
LineFit fit_loglog(std::span<const double> x, std::span<const double> y,
                   bool drop_endpoints = false);

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * 3.14159265358979323846);
}

}  // namespace mvsde
