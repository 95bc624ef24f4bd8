#include "mvsde/measures.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "mvsde/errors.hpp"
#include "mvsde/rng.hpp"

namespace mvsde {

namespace {

double norm(std::span<const double> x) {
  double s = 0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

}  // namespace

Measure::Measure(std::size_t dim, std::vector<double> coords, std::vector<double> weights)
    : dim_(dim), coords_(std::move(coords)), weights_(std::move(weights)) {
  if (dim_ == 0) throw DomainError("measure dimension must be positive");
  if (weights_.empty()) throw DomainError("measure needs at least one atom");
  if (coords_.size() != weights_.size() * dim_)
    throw DomainError("coordinate count does not match weights x dim");
  double total = 0;
  for (double w : weights_) {
    if (!(w >= 0) || !std::isfinite(w)) throw DomainError("weights must be finite and nonnegative");
    total += w;
  }
  if (!(total > 0)) throw DomainError("weights sum to zero");
  for (double& w : weights_) w /= total;
  for (double c : coords_)
    if (!std::isfinite(c)) throw NumericError("non-finite particle coordinate");
}

Measure::Measure(std::size_t dim, std::vector<double> coords)
    : Measure(dim, coords, std::vector<double>(dim ? coords.size() / dim : 0, 1.0)) {}

Measure Measure::dirac(std::span<const double> x) {
  return Measure(x.size(), std::vector<double>(x.begin(), x.end()), {1.0});
}

Measure Measure::atoms1(std::vector<double> xs, std::vector<double> ws) {
  if (ws.empty()) ws.assign(xs.size(), 1.0);
  return Measure(1, std::move(xs), std::move(ws));
}

double Measure::mean(std::size_t axis) const {
  double s = 0;
  for (std::size_t i = 0; i < size(); ++i) s += weights_[i] * coords_[i * dim_ + axis];
  return s;
}

double Measure::variance(std::size_t axis) const {
  const double m = mean(axis);
  double s = 0;
  for (std::size_t i = 0; i < size(); ++i) {
    const double d = coords_[i * dim_ + axis] - m;
    s += weights_[i] * d * d;
  }
  return s;
}

double Density::cell_volume() const {
  double v = 1;
  for (std::size_t a = 0; a < dim; ++a) v *= cell_width(a);
  return v;
}

double Density::mass() const {
  return std::accumulate(values.begin(), values.end(), 0.0) * cell_volume();
}

bool Density::same_grid(const Density& o) const {
  if (dim != o.dim || shape != o.shape) return false;
  for (std::size_t a = 0; a < dim; ++a) {
    const double tol = 1e-12 * std::max(1.0, std::abs(hi[a] - lo[a]));
    if (std::abs(lo[a] - o.lo[a]) > tol || std::abs(hi[a] - o.hi[a]) > tol) return false;
  }
  return true;
}

Flow::Flow(std::vector<double> times, std::vector<Measure> measures)
    : times_(std::move(times)), measures_(std::move(measures)) {
  if (times_.empty() || times_.size() != measures_.size())
    throw DomainError("flow needs one measure per time node");
  for (std::size_t i = 1; i < times_.size(); ++i)
    if (!(times_[i] > times_[i - 1])) throw DomainError("flow times must be strictly increasing");
  for (auto& m : measures_)
    if (m.dim() != measures_.front().dim()) throw DomainError("flow measures differ in dimension");
}

Flow Flow::constant(const Measure& m, std::vector<double> times) {
  std::vector<Measure> ms(times.size(), m);
  return Flow(std::move(times), std::move(ms));
}

std::size_t Flow::node_index(double t) const {
  if (times_.size() == 1) return 0;
  const double span = times_.back() - times_.front();
  const double slack = 1e-12 * std::max(1.0, span);
  if (t < times_.front() - slack || t > times_.back() + slack)
    throw DomainError("flow does not cover time " + std::to_string(t));
  auto it = std::upper_bound(times_.begin(), times_.end(), t + slack);
  return static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, (it - times_.begin()) - 1));
}

bool Flow::covers(double s, double t) const {
  if (times_.size() == 1) return true;
  const double slack = 1e-12 * std::max(1.0, times_.back() - times_.front());
  return s >= times_.front() - slack && t <= times_.back() + slack;
}

std::size_t FunctionalTrack::lookup(double t) const {
  if (step_times.empty()) return npos;
  const double slack = 1e-12 * std::max(1.0, std::abs(step_times.back()));
  if (t < step_times.front() - slack) return npos;
  auto it = std::upper_bound(step_times.begin(), step_times.end(), t + slack);
  return static_cast<std::size_t>((it - step_times.begin()) - 1);
}

double moment_k(const Measure& m, double k) {
  if (!(k >= 0)) throw DomainError("moment exponent must be nonnegative");
  if (k == 0) return 1.0;
  double s = 0;
  for (std::size_t i = 0; i < m.size(); ++i) s += m.weight(i) * std::pow(norm(m.point(i)), k);
  return k >= 1 ? std::pow(s, 1.0 / k) : s;
}

double integrate(const Measure& m, const std::function<double(std::span<const double>)>& f) {
  double s = 0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double v = f(m.point(i));
    if (!std::isfinite(v)) throw NumericError("integrand is not finite at atom " + std::to_string(i));
    s += m.weight(i) * v;
  }
  return s;
}

Measure resample(const Measure& m, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw DomainError("resample size must be at least 1");
  CounterRng rng(seed, 0x5e5a3b1eULL);
  const double u0 = rng.uniform() / n;
  std::vector<double> coords;
  coords.reserve(n * m.dim());
  double cum = m.weight(0);
  std::size_t j = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double u = u0 + static_cast<double>(i) / n;
    while (u > cum && j + 1 < m.size()) cum += m.weight(++j);
    auto p = m.point(j);
    coords.insert(coords.end(), p.begin(), p.end());
  }
  return Measure(m.dim(), std::move(coords));
}

double silverman_bandwidth(const Measure& m) {
  double var = 0;
  for (std::size_t a = 0; a < m.dim(); ++a) var += m.variance(a);
  var /= m.dim();
  const double sd = std::sqrt(std::max(0.0, var));
  if (!(sd > 0)) throw DomainError("zero spread: Silverman bandwidth undefined, pass one explicitly");
  return 1.06 * sd * std::pow(static_cast<double>(m.size()), -0.2);
}

GridSpec auto_grid(const Measure& a, const Measure& b, double bandwidth, std::size_t cells) {
  if (a.dim() != b.dim()) throw DomainError("measures differ in dimension");
  GridSpec g;
  for (std::size_t ax = 0; ax < a.dim(); ++ax) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const Measure* m : {&a, &b})
      for (std::size_t i = 0; i < m->size(); ++i) {
        lo = std::min(lo, m->point(i)[ax]);
        hi = std::max(hi, m->point(i)[ax]);
      }
    g.lo.push_back(lo - 4 * bandwidth);
    g.hi.push_back(hi + 4 * bandwidth);
    g.shape.push_back(cells);
  }
  return g;
}

GridSpec auto_grid(const Measure& m, double bandwidth, std::size_t cells) {
  return auto_grid(m, m, bandwidth, cells);
}

namespace {

// Scatter each atom's Gaussian onto the cells within ±7 bandwidths.
void scatter_axis(double x, double h, double lo, double w, std::size_t n,
                  std::vector<double>& out, std::size_t& first) {
  const double reach = 7.0 * h;
  const long i0 = std::max(0L, static_cast<long>(std::floor((x - reach - lo) / w)));
  const long i1 = std::min(static_cast<long>(n) - 1, static_cast<long>(std::floor((x + reach - lo) / w)));
  out.clear();
  first = static_cast<std::size_t>(i0);
  for (long i = i0; i <= i1; ++i) {
    const double u = (lo + (i + 0.5) * w - x) / h;
    out.push_back(std::exp(-0.5 * u * u));
  }
}

}  // namespace

Density to_density(const Measure& m, const GridSpec& grid, double bandwidth) {
  if (m.dim() > 2) throw DomainError("densities are limited to dim <= 2");
  if (!(bandwidth > 0)) throw DomainError("bandwidth must be positive");
  if (grid.lo.size() != m.dim() || grid.hi.size() != m.dim() || grid.shape.size() != m.dim())
    throw DomainError("grid dimension does not match measure");
  Density d;
  d.dim = m.dim();
  d.lo = grid.lo;
  d.hi = grid.hi;
  d.shape = grid.shape;
  std::size_t total = 1;
  for (std::size_t a = 0; a < d.dim; ++a) {
    if (grid.shape[a] == 0 || !(grid.hi[a] > grid.lo[a])) throw DomainError("degenerate grid");
    total *= grid.shape[a];
  }
  d.values.assign(total, 0.0);

  std::vector<double> k0, k1;
  std::size_t f0 = 0, f1 = 0;
  const double w0 = d.cell_width(0);
  for (std::size_t i = 0; i < m.size(); ++i) {
    auto p = m.point(i);
    for (std::size_t a = 0; a < d.dim; ++a)
      if (p[a] - 4 * bandwidth < d.lo[a] || p[a] + 4 * bandwidth > d.hi[a]) d.coverage_warning = true;
    scatter_axis(p[0], bandwidth, d.lo[0], w0, d.shape[0], k0, f0);
    if (d.dim == 1) {
      for (std::size_t c = 0; c < k0.size(); ++c) d.values[f0 + c] += m.weight(i) * k0[c];
    } else {
      scatter_axis(p[1], bandwidth, d.lo[1], d.cell_width(1), d.shape[1], k1, f1);
      for (std::size_t c = 0; c < k0.size(); ++c) {
        const double wa = m.weight(i) * k0[c];
        double* row = d.values.data() + (f0 + c) * d.shape[1] + f1;
        for (std::size_t e = 0; e < k1.size(); ++e) row[e] += wa * k1[e];
      }
    }
  }
  const double mass = d.mass();
  if (!(mass > 0)) throw DomainError("density grid misses all particle mass");
  for (double& v : d.values) v /= mass;
  d.normalized = true;
  return d;
}

Density to_density(const Measure& m) {
  const double h = silverman_bandwidth(m);
  return to_density(m, auto_grid(m, h, m.dim() == 1 ? 512 : 128), h);
}

Measure grid_measure(const Density& d, double min_mass) {
  const double vol = d.cell_volume();
  std::vector<double> coords, weights;
  const std::size_t n1 = d.dim == 2 ? d.shape[1] : 1;
  for (std::size_t c = 0; c < d.values.size(); ++c) {
    const double w = d.values[c] * vol;
    if (!(w > min_mass)) continue;
    coords.push_back(d.center(0, c / n1));
    if (d.dim == 2) coords.push_back(d.center(1, c % n1));
    weights.push_back(w);
  }
  if (weights.empty()) throw DomainError("density has no cells above the mass threshold");
  return Measure(d.dim, std::move(coords), std::move(weights));
}

void write_measure_csv(std::ostream& os, const Measure& m) {
  os << "w";
  for (std::size_t a = 0; a < m.dim(); ++a) os << ",x" << (a + 1);
  os << "\n";
  os.precision(17);
  for (std::size_t i = 0; i < m.size(); ++i) {
    os << m.weight(i);
    for (double v : m.point(i)) os << "," << v;
    os << "\n";
  }
}

namespace {

std::vector<double> split_numbers(const std::string& line, std::size_t row) {
  std::vector<double> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    std::size_t used = 0;
    double v;
    try {
      v = std::stod(cell, &used);
    } catch (const std::exception&) {
      throw ParseError("/" + std::to_string(row), "not a number: '" + cell + "'");
    }
    out.push_back(v);
  }
  return out;
}

std::size_t header_columns(std::istream& is) {
  std::string header;
  if (!std::getline(is, header)) throw ParseError("/0", "missing CSV header");
  if (!header.empty() && header.back() == '\r') header.pop_back();
  return static_cast<std::size_t>(std::count(header.begin(), header.end(), ',')) + 1;
}

}  // namespace

Measure read_measure_csv(std::istream& is) {
  const std::size_t cols = header_columns(is);
  if (cols < 2) throw ParseError("/0", "measure CSV needs w and at least one coordinate");
  const std::size_t dim = cols - 1;
  std::vector<double> coords, weights;
  std::string line;
  std::size_t row = 0;
  while (std::getline(is, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto v = split_numbers(line, row);
    if (v.size() != cols) throw ParseError("/" + std::to_string(row), "wrong column count");
    weights.push_back(v[0]);
    coords.insert(coords.end(), v.begin() + 1, v.end());
  }
  return Measure(dim, std::move(coords), std::move(weights));
}

void write_density_csv(std::ostream& os, const Density& d) {
  os << (d.dim == 1 ? "x1,value\n" : "x1,x2,value\n");
  os.precision(17);
  const std::size_t n1 = d.dim == 2 ? d.shape[1] : 1;
  for (std::size_t c = 0; c < d.values.size(); ++c) {
    os << d.center(0, c / n1);
    if (d.dim == 2) os << "," << d.center(1, c % n1);
    os << "," << d.values[c] << "\n";
  }
}

Density read_density_csv(std::istream& is) {
  const std::size_t cols = header_columns(is);
  if (cols != 2 && cols != 3) throw ParseError("/0", "density CSV needs 2 or 3 columns");
  const std::size_t dim = cols - 1;
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t row = 0;
  while (std::getline(is, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto v = split_numbers(line, row);
    if (v.size() != cols) throw ParseError("/" + std::to_string(row), "wrong column count");
    rows.push_back(std::move(v));
  }
  if (rows.empty()) throw ParseError("/1", "density CSV has no rows");
  Density d;
  d.dim = dim;
  for (std::size_t a = 0; a < dim; ++a) {
    std::vector<double> cs;
    for (auto& r : rows) cs.push_back(r[a]);
    std::sort(cs.begin(), cs.end());
    cs.erase(std::unique(cs.begin(), cs.end()), cs.end());
    const std::size_t n = cs.size();
    const double w = n > 1 ? (cs.back() - cs.front()) / (n - 1) : 1.0;
    d.lo.push_back(cs.front() - 0.5 * w);
    d.hi.push_back(cs.back() + 0.5 * w);
    d.shape.push_back(n);
  }
  std::size_t total = d.shape[0] * (dim == 2 ? d.shape[1] : 1);
  if (total != rows.size()) throw ParseError("/1", "rows do not form a full grid");
  for (auto& r : rows) d.values.push_back(r.back());
  d.normalized = std::abs(d.mass() - 1.0) < 1e-6;
  return d;
}

}  // namespace mvsde
