#include "mvsde/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "mvsde/errors.hpp"
#include "mvsde/transport.hpp"

namespace mvsde {

std::string to_string(DistanceMethod m) {
  switch (m) {
    case DistanceMethod::exact_1d: return "exact_1d";
    case DistanceMethod::lp_oracle: return "lp_oracle";
    case DistanceMethod::dual_bound: return "dual_bound";
    case DistanceMethod::grid_l1: return "grid_l1";
  }
  return "unknown";
}

nlohmann::json to_json(const DistanceReport& r) {
  nlohmann::json j{{"value", r.value}, {"method", to_string(r.method)}, {"gap", r.gap}};
  if (r.subsample) j["subsample"] = r.subsample;
  return j;
}

namespace {

double dist(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

double norm(std::span<const double> a) {
  double s = 0;
  for (double v : a) s += v * v;
  return std::sqrt(s);
}

bool identical(const Measure& a, const Measure& b) {
  return &a == &b || (a.dim() == b.dim() && a.coords() == b.coords() && a.weights() == b.weights());
}

// Every atom of both measures sits at one point.
bool same_dirac(const Measure& a, const Measure& b) {
  if (a.dim() != b.dim() || a.size() == 0 || b.size() == 0) return false;
  const std::span<const double> x = a.point(0);
  auto at_x = [&](const Measure& m) {
    for (std::size_t i = 0; i < m.size(); ++i)
      if (!std::equal(x.begin(), x.end(), m.point(i).begin())) return false;
    return true;
  };
  return at_x(a) && at_x(b);
}

void check_dims(const Measure& a, const Measure& b) {
  if (a.dim() != b.dim()) throw DomainError("measures differ in dimension");
}

// Distinct atoms in lexicographic order with merged weights.
struct Support {
  std::size_t dim;
  std::vector<double> coords, weights;
  std::size_t size() const { return weights.size(); }
  std::span<const double> point(std::size_t i) const { return {coords.data() + i * dim, dim}; }
};

Support compress(const Measure& m) {
  std::vector<std::size_t> idx(m.size());
  std::iota(idx.begin(), idx.end(), 0);
  auto less = [&](std::size_t a, std::size_t b) {
    auto pa = m.point(a), pb = m.point(b);
    return std::lexicographical_compare(pa.begin(), pa.end(), pb.begin(), pb.end());
  };
  std::stable_sort(idx.begin(), idx.end(), less);
  Support s{m.dim(), {}, {}};
  for (std::size_t k = 0; k < idx.size(); ++k) {
    auto p = m.point(idx[k]);
    if (k > 0 && std::equal(p.begin(), p.end(), m.point(idx[k - 1]).begin())) {
      s.weights.back() += m.weight(idx[k]);
    } else {
      s.coords.insert(s.coords.end(), p.begin(), p.end());
      s.weights.push_back(m.weight(idx[k]));
    }
  }
  return s;
}

double cost_fn(double d, double p) { return d == 0 ? 0.0 : std::pow(d, p); }

}  // namespace

DistanceReport wasserstein_1d(const Measure& m1, const Measure& m2, double k) {
  if (m1.dim() != 1 || m2.dim() != 1) throw DomainError("wasserstein_1d needs dim = 1");
  if (!(k >= 1)) throw DomainError("wasserstein_1d needs k >= 1; use wasserstein_eta for k < 1");
  DistanceReport r{0.0, DistanceMethod::exact_1d, 0.0, 0};
  if (identical(m1, m2)) return r;
  auto sorted = [](const Measure& m) {
    std::vector<std::pair<double, double>> v(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) v[i] = {m.point(i)[0], m.weight(i)};
    std::sort(v.begin(), v.end());
    return v;
  };
  auto a = sorted(m1), b = sorted(m2);
  std::size_t i = 0, j = 0;
  double wa = a[0].second, wb = b[0].second, total = 0;
  while (i < a.size() && j < b.size()) {
    const double c = cost_fn(std::abs(a[i].first - b[j].first), k);
    if (wa < wb) {
      total += wa * c;
      wb -= wa;
      if (++i < a.size()) wa = a[i].second;
    } else {
      total += wb * c;
      wa -= wb;
      if (++j < b.size()) wb = b[j].second;
    }
  }
  r.value = std::pow(total, 1.0 / k);
  return r;
}

DistanceReport ot_lp(const Measure& m1, const Measure& m2, double exponent) {
  check_dims(m1, m2);
  if (!(exponent > 0)) throw DomainError("cost exponent must be positive");
  DistanceReport r{0.0, DistanceMethod::lp_oracle, 0.0, 0};
  if (identical(m1, m2)) return r;
  const Support a = compress(m1), b = compress(m2);
  const std::size_t n = a.size(), m = b.size();
  if (n * m > kLpBudget)
    throw SizeError("transport problem " + std::to_string(n) + "x" + std::to_string(m) +
                    " exceeds the exact budget of " + std::to_string(kLpBudget) +
                    " cells; subsample the measures first");
  std::vector<double> cost(n * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) cost[i * m + j] = cost_fn(dist(a.point(i), b.point(j)), exponent);
  const auto sol = solve_transport(a.weights, b.weights, cost);
  const double primal = std::max(0.0, sol.primal);
  const double root = 1.0 / std::max(exponent, 1.0);
  r.value = std::pow(primal, root);
  r.gap = std::abs(sol.primal - sol.dual);
  return r;
}

Measure subsample_for_lp(const Measure& m, std::size_t atoms, std::uint64_t seed) {
  std::vector<std::size_t> idx(m.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return m.point(a)[0] < m.point(b)[0]; });
  std::vector<double> coords, weights;
  coords.reserve(m.coords().size());
  for (std::size_t i : idx) {
    auto p = m.point(i);
    coords.insert(coords.end(), p.begin(), p.end());
    weights.push_back(m.weight(i));
  }
  return resample(Measure(m.dim(), std::move(coords), std::move(weights)), atoms, seed);
}

namespace {

DistanceReport lp_with_budget(const Measure& m1, const Measure& m2, double p,
                              std::size_t max_atoms, std::uint64_t seed) {
  try {
    return ot_lp(m1, m2, p);
  } catch (const SizeError&) {
    const std::size_t cap = std::max<std::size_t>(1, std::min<std::size_t>(max_atoms, 100));
    const Measure s1 = m1.size() > cap ? subsample_for_lp(m1, cap, seed) : m1;
    const Measure s2 = m2.size() > cap ? subsample_for_lp(m2, cap, seed) : m2;
    DistanceReport r = ot_lp(s1, s2, p);
    r.subsample = cap;
    return r;
  }
}

}  // namespace

DistanceReport wasserstein(const Measure& m1, const Measure& m2, double k, std::size_t max_atoms,
                           std::uint64_t seed) {
  check_dims(m1, m2);
  if (!(k >= 1)) throw DomainError("W_k needs k >= 1");
  if (m1.dim() == 1) return wasserstein_1d(m1, m2, k);
  return lp_with_budget(m1, m2, k, max_atoms, seed);
}

DistanceReport wasserstein_eta(const Measure& m1, const Measure& m2, double eta,
                               std::size_t max_atoms, std::uint64_t seed) {
  if (!(eta > 0 && eta <= 1)) throw DomainError("eta must lie in (0, 1]");
  check_dims(m1, m2);
  if (eta == 1 && m1.dim() == 1) return wasserstein_1d(m1, m2, 1.0);
  return lp_with_budget(m1, m2, eta, max_atoms, seed);
}

double variation_weight(double norm_x, double theta) {
  if (theta == 0) return 1.0;
  return 1.0 + (norm_x == 0 ? 0.0 : std::pow(norm_x, theta));
}

DistanceReport weighted_variation(const Density& d1, const Density& d2, double theta) {
  if (!(theta >= 0)) throw DomainError("theta must be nonnegative");
  if (!d1.same_grid(d2)) throw DomainError("densities are on different grids");
  const std::size_t n1 = d1.dim == 2 ? d1.shape[1] : 1;
  double s = 0;
  for (std::size_t c = 0; c < d1.values.size(); ++c) {
    const double diff = std::abs(d1.values[c] - d2.values[c]);
    if (diff == 0) continue;
    double r2 = std::pow(d1.center(0, c / n1), 2);
    if (d1.dim == 2) r2 += std::pow(d1.center(1, c % n1), 2);
    s += diff * variation_weight(std::sqrt(r2), theta);
  }
  return {s * d1.cell_volume(), DistanceMethod::grid_l1, 0.0, 0};
}

DistanceReport weighted_variation_atoms(const Measure& m1, const Measure& m2, double theta) {
  if (!(theta >= 0)) throw DomainError("theta must be nonnegative");
  check_dims(m1, m2);
  DistanceReport r{0.0, DistanceMethod::exact_1d, 0.0, 0};
  if (identical(m1, m2)) return r;
  std::map<std::vector<double>, double> diff;
  for (std::size_t i = 0; i < m1.size(); ++i) {
    auto p = m1.point(i);
    diff[std::vector<double>(p.begin(), p.end())] += m1.weight(i);
  }
  for (std::size_t i = 0; i < m2.size(); ++i) {
    auto p = m2.point(i);
    diff[std::vector<double>(p.begin(), p.end())] -= m2.weight(i);
  }
  for (auto& [x, w] : diff) r.value += std::abs(w) * variation_weight(norm(x), theta);
  return r;
}

std::pair<Density, Density> shared_densities(const Measure& a, const Measure& b, double bandwidth,
                                             std::size_t cells) {
  check_dims(a, b);
  if (!(bandwidth > 0)) {
    std::vector<double> coords = a.coords();
    coords.insert(coords.end(), b.coords().begin(), b.coords().end());
    std::vector<double> w;
    for (double x : a.weights()) w.push_back(0.5 * x);
    for (double x : b.weights()) w.push_back(0.5 * x);
    const Measure pooled(a.dim(), std::move(coords), std::move(w));
    bandwidth = silverman_bandwidth(pooled);
  }
  if (cells == 0) cells = a.dim() == 1 ? 512 : 128;
  const GridSpec g = auto_grid(a, b, bandwidth, cells);
  return {to_density(a, g, bandwidth), to_density(b, g, bandwidth)};
}

double FlowDistances::value(double lambda) const {
  if (!(lambda >= 0)) throw DomainError("lambda must be nonnegative");
  double v = 0;
  for (std::size_t i = 0; i < times.size(); ++i)
    v = std::max(v, std::exp(-lambda * times[i]) * (first[i] + second[i]));
  return v;
}

namespace {

void check_grids(const Flow& f1, const Flow& f2) {
  if (f1.times().size() != f2.times().size())
    throw DomainError("flows are on different time grids");
  for (std::size_t i = 0; i < f1.size(); ++i)
    if (std::abs(f1.times()[i] - f2.times()[i]) > 1e-12 * std::max(1.0, std::abs(f1.times()[i])))
      throw DomainError("flows are on different time grids");
}

}  // namespace

FlowDistances flow_distances_eta(const Flow& f1, const Flow& f2, double k, double eta,
                                 const FlowMetricOptions& opt) {
  check_grids(f1, f2);
  FlowDistances d;
  d.times = f1.times();
  for (std::size_t i = 0; i < f1.size(); ++i) {
    const Measure &a = f1.at_node(i), &b = f2.at_node(i);
    if (identical(a, b)) {
      d.first.push_back(0);
      d.second.push_back(0);
      continue;
    }
    d.first.push_back(wasserstein(a, b, k, opt.max_atoms, opt.seed + i).value);
    d.second.push_back(wasserstein_eta(a, b, eta, opt.max_atoms, opt.seed + i).value);
  }
  return d;
}

FlowDistances flow_distances_var(const Flow& f1, const Flow& f2, double k,
                                 const FlowMetricOptions& opt) {
  check_grids(f1, f2);
  FlowDistances d;
  d.times = f1.times();
  for (std::size_t i = 0; i < f1.size(); ++i) {
    const Measure &a = f1.at_node(i), &b = f2.at_node(i);
    if (identical(a, b) || same_dirac(a, b)) {
      d.first.push_back(0);
      d.second.push_back(0);
      continue;
    }
    d.first.push_back(wasserstein(a, b, k, opt.max_atoms, opt.seed + i).value);
    if (opt.variation == VariationMode::atoms) {
      d.second.push_back(weighted_variation_atoms(a, b, k).value);
    } else {
      auto [pa, pb] = shared_densities(a, b, 0.0, opt.density_cells);
      d.second.push_back(weighted_variation(pa, pb, k).value);
    }
  }
  return d;
}

double rho_lambda(const Flow& f1, const Flow& f2, double lambda, double k, double eta,
                  const FlowMetricOptions& opt) {
  return flow_distances_eta(f1, f2, k, eta, opt).value(lambda);
}

double rho_tilde_lambda(const Flow& f1, const Flow& f2, double lambda, double k,
                        const FlowMetricOptions& opt) {
  return flow_distances_var(f1, f2, k, opt).value(lambda);
}

}  // namespace mvsde
