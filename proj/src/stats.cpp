#include "mvsde/stats.hpp"

#include <algorithm>
#include <numeric>

namespace mvsde {

LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  LineFit fit;
  const std::size_t n = std::min(x.size(), y.size());
  fit.points = n;
  if (n < 2) return fit;
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0) return fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r2 = syy > 0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return fit;
}

LineFit fit_loglog(std::span<const double> x, std::span<const double> y, bool drop_endpoints) {
  std::vector<std::pair<double, double>> pts;
  const std::size_t n = std::min(x.size(), y.size());
  for (std::size_t i = 0; i < n; ++i)
    if (x[i] > 0 && y[i] > 0) pts.emplace_back(std::log(x[i]), std::log(y[i]));
  std::sort(pts.begin(), pts.end());
  if (drop_endpoints && pts.size() >= 4) {
    pts.erase(pts.begin());
    pts.pop_back();
  }
  std::vector<double> lx, ly;
  for (auto& [a, b] : pts) {
    lx.push_back(a);
    ly.push_back(b);
  }
  return fit_line(lx, ly);
}

}  // namespace mvsde
