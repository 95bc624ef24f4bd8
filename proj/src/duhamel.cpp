#include "mvsde/duhamel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "mvsde/errors.hpp"
#include "mvsde/metrics.hpp"
#include "mvsde/stats.hpp"

namespace mvsde {

namespace {

constexpr double kSupportCut = 1e-14;  // relative, for row support ranges
constexpr double kWindowSd = 9.0;

/// Gauss–Legendre nodes and weights on [-1, 1].
void gauss_legendre(std::size_t n, std::vector<double>& x, std::vector<double>& w) {
  x.assign(n, 0.0);
  w.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = z;
      for (std::size_t k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (z * p1 - p0) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    x[i] = z;
    w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
  }
}

struct Range {
  std::ptrdiff_t lo = 0, hi = -1;  // inclusive; empty when hi < lo
};

Range support(const std::vector<double>& row) {
  double mx = 0.0;
  for (double v : row) mx = std::max(mx, std::abs(v));
  Range r;
  if (mx == 0.0) return r;
  const double cut = kSupportCut * mx;
  std::ptrdiff_t n = static_cast<std::ptrdiff_t>(row.size());
  r.lo = 0;
  while (r.lo < n && std::abs(row[r.lo]) <= cut) ++r.lo;
  r.hi = n - 1;
  while (r.hi >= 0 && std::abs(row[r.hi]) <= cut) --r.hi;
  return r;
}

enum class Terms { both, drift };

/// Quadrature points r of the remainder integral at table row j, with
/// the substitution r = T_j − v² on every table interval.
struct Point {
  std::size_t row, interval;
  double r, weight, theta;
};

class Context {
 public:
  Context(const Model& model, const Flow& mu, const Flow& nu, double x0, double lo, double h, std::size_t cells,
          std::vector<double> times, std::size_t gauss, std::size_t cov_table, std::size_t only_row)
      : model_(model), x0_(x0), lo_(lo), h_(h), m_(cells), times_(std::move(times)) {
    const std::size_t rows = times_.size();
    std::vector<double> gx, gw;
    gauss_legendre(gauss, gx, gw);
    row_begin_.assign(rows + 1, 0);
    for (std::size_t j = 1; j < rows; ++j) {
      row_begin_[j] = points_.size();
      if (only_row != 0 && j != only_row) continue;
      const double tj = times_[j];
      for (std::size_t i = 0; i < j; ++i) {
        const double va = std::sqrt(std::max(0.0, tj - times_[i + 1]));
        const double vb = std::sqrt(tj - times_[i]);
        const double half = 0.5 * (vb - va), mid = 0.5 * (vb + va);
        const double width = times_[i + 1] - times_[i];
        for (std::size_t g = 0; g < gauss; ++g) {
          const double v = mid + half * gx[g];
          const double r = tj - v * v;
          points_.push_back({j, i, r, gw[g] * half * 2.0 * v, std::clamp((r - times_[i]) / width, 0.0, 1.0)});
        }
      }
    }
    row_begin_[rows] = points_.size();

    space_free_ = model.sigma_space_free();
    drift_zero_ = model.drift_zero();
    const std::size_t np = points_.size();
    FlowFunctionals dfun(model, mu, FlowFunctionals::Part::drift);
    FlowFunctionals sfun(model, nu, FlowFunctionals::Part::diffusion);

    if (!drift_zero_) {
      drift_.assign(np * m_, 0.0);
      for (std::size_t p = 0; p < np; ++p) {
        const double r = points_[p].r;
        const std::vector<double> slots = dfun.at(r);
        for (std::size_t c = 0; c < m_; ++c) {
          const double y = center(c);
          double out = 0.0;
          model.drift_raw(r, {&y, 1}, slots, {&out, 1});
          drift_[p * m_ + c] = out;
        }
      }
    }
    const std::size_t per = space_free_ ? 1 : m_;
    diff_.assign(np * per, 0.0);
    for (std::size_t p = 0; p < np; ++p) {
      const double r = points_[p].r;
      const std::vector<double> slots = sfun.at(r);
      for (std::size_t c = 0; c < per; ++c) diff_[p * per + c] = a_at(r, center(c), slots);
    }

    // cumulative ∫_s^u a_w(z) dw on a uniform table, midpoint rule
    s_ = times_.front();
    du_ = (times_.back() - s_) / cov_table;
    cum_.assign(per * (cov_table + 1), 0.0);
    for (std::size_t k = 0; k < cov_table; ++k) {
      const double u = s_ + (k + 0.5) * du_;
      const std::vector<double> slots = sfun.at(u);
      for (std::size_t c = 0; c < per; ++c) {
        const double a = a_at(u, center(c), slots);
        cum_[c * (cov_table + 1) + k + 1] = cum_[c * (cov_table + 1) + k] + a * du_;
      }
    }
    table_ = cov_table;

    if (space_free_) {
      kernels_.resize(np);
      radius_.resize(np);
      for (std::size_t p = 0; p < np; ++p) {
        const double A = cumulative(0, times_[points_[p].row]) - cumulative(0, points_[p].r);
        radius_[p] = window(A);
        lattice_drift(A, radius_[p], kernels_[p]);
      }
    }

    qnode_.resize(rows);
    for (std::size_t j = 0; j < rows; ++j) qnode_[j] = q_at(times_[j]);
    qpoint_.resize(np);
    for (std::size_t p = 0; p < np; ++p) qpoint_[p] = q_at(points_[p].r);
  }

  double center(std::size_t c) const { return lo_ + (c + 0.5) * h_; }

  double cumulative(std::size_t cell, double u) const {
    const double pos = std::clamp((u - s_) / du_, 0.0, static_cast<double>(table_));
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(pos), table_ - 1);
    const double w = pos - k;
    const double* c = &cum_[cell * (table_ + 1)];
    return c[k] + w * (c[k + 1] - c[k]);
  }

  /// Frozen-kernel row at time u: cell averages of q^{z}_{s,u}(x0, z).
  /// At u = s the Dirac mass on the cell holding x0.
  std::vector<double> q_at(double u) const {
    std::vector<double> q(m_, 0.0);
    if (u <= s_) {
      const double pos = std::floor((x0_ - lo_) / h_);
      q[static_cast<std::size_t>(std::clamp(pos, 0.0, m_ - 1.0))] = 1.0 / h_;
      return q;
    }
    for (std::size_t z = 0; z < m_; ++z) {
      const double A = cumulative(space_free_ ? 0 : z, u);
      const double sd = std::sqrt(A);
      const double a = lo_ + z * h_, b = a + h_;
      q[z] = (normal_cdf((b - x0_) / sd) - normal_cdf((a - x0_) / sd)) / h_;
    }
    return q;
  }

  const std::vector<double>& q_row(std::size_t j) const { return qnode_[j]; }

  /// Remainder of row j evaluated on table P (rows 0..j used).
  std::vector<double> remainder(std::size_t j, const std::vector<std::vector<double>>& P, Terms terms) const {
    std::vector<double> rem(m_, 0.0);
    const std::size_t pb = row_begin_[j], pe = row_begin_[j + 1];
    if (pb == pe) return rem;
    const bool trace = !space_free_ && terms == Terms::both;
    if (drift_zero_ && !trace) return rem;

    const std::size_t np = pe - pb;
    std::vector<std::vector<double>> F(np), PR, PA;
    if (trace) PR.resize(np), PA.resize(np);
    std::vector<Range> frange(np);
    for (std::size_t q = 0; q < np; ++q) {
      const Point& pt = points_[pb + q];
      // q exactly at r, the correction p − q interpolated between nodes
      const std::vector<double>& A = P[pt.interval];
      const std::vector<double>& B = P[pt.interval + 1];
      const std::vector<double>& QA = qnode_[pt.interval];
      const std::vector<double>& QB = qnode_[pt.interval + 1];
      const std::vector<double>& Qr = qpoint_[pb + q];
      std::vector<double> prow(m_);
      for (std::size_t c = 0; c < m_; ++c)
        prow[c] = Qr[c] + (1.0 - pt.theta) * (A[c] - QA[c]) + pt.theta * (B[c] - QB[c]);
      const Range rg = support(prow);
      frange[q] = rg;
      F[q].assign(m_, 0.0);
      if (trace) PR[q].assign(m_, 0.0), PA[q].assign(m_, 0.0);
      for (std::ptrdiff_t c = rg.lo; c <= rg.hi; ++c) {
        const double pr = prow[c];
        if (!drift_zero_) F[q][c] = pr * drift_[(pb + q) * m_ + c];
        if (trace) {
          PR[q][c] = pr;
          PA[q][c] = pr * diff_[(pb + q) * m_ + c];
        }
      }
    }

    const std::ptrdiff_t M = static_cast<std::ptrdiff_t>(m_);
#pragma omp parallel for schedule(dynamic, 16)
    for (std::ptrdiff_t z = 0; z < M; ++z) {
      double acc = 0.0;
      std::vector<double> e, g;
      for (std::size_t q = 0; q < np; ++q) {
        const Range rg = frange[q];
        if (rg.hi < rg.lo) continue;
        const Point& pt = points_[pb + q];
        if (space_free_) {
          if (drift_zero_) continue;
          const std::ptrdiff_t R = radius_[pb + q];
          const std::ptrdiff_t c0 = std::max(rg.lo, z - R), c1 = std::min(rg.hi, z + R);
          if (c1 < c0) continue;
          const double* k = kernels_[pb + q].data() + R + z;  // k[-c] = kernel(z − c)
          const double* f = F[q].data();
          double sum = 0.0;
          for (std::ptrdiff_t c = c0; c <= c1; ++c) sum += f[c] * k[-c];
          acc += pt.weight * sum;
        } else {
          const double A = cumulative(z, times_[j]) - cumulative(z, pt.r);
          const std::ptrdiff_t R = window(A);
          const std::ptrdiff_t c0 = std::max(rg.lo, z - R), c1 = std::min(rg.hi, z + R);
          if (c1 < c0) continue;
          lattice_drift(A, R, e);
          if (trace) lattice_trace(A, R, g);
          const double az = diff_[(pb + q) * m_ + z];
          double sum = 0.0;
          for (std::ptrdiff_t c = c0; c <= c1; ++c) {
            const std::size_t b = static_cast<std::size_t>(z - c + R);
            if (!drift_zero_) sum += F[q][c] * e[b];
            if (trace) sum += 0.5 * (PA[q][c] - az * PR[q][c]) * g[b];
          }
          acc += pt.weight * sum;
        }
      }
      rem[z] = acc;
    }
    return rem;
  }

 private:
  // Kernels averaged over the output cell and integrated over the source
  // cell, indexed by d = z − c + R. With S(d) = Φ(d h/√A) and φ the
  // N(0, A) density on the lattice: drift (2S(d) − S(d−1) − S(d+1))/h,
  // trace (φ(d−1) − 2φ(d) + φ(d+1))/h.
  void lattice_drift(double A, std::ptrdiff_t R, std::vector<double>& k) const {
    k.assign(2 * R + 1, 0.0);
    const double u = h_ / std::sqrt(A);
    // upper tail for d ≥ 1, odd symmetry for d ≤ −1
    auto tail = [u](std::ptrdiff_t d) { return normal_cdf(-static_cast<double>(d) * u); };
    double prev = tail(0), cur = tail(1);
    for (std::ptrdiff_t d = 1; d <= R; ++d) {
      const double next = tail(d + 1);
      const double v = -(2.0 * cur - prev - next) / h_;
      k[R + d] = v;
      k[R - d] = -v;
      prev = cur;
      cur = next;
    }
  }

  void lattice_trace(double A, std::ptrdiff_t R, std::vector<double>& k) const {
    k.assign(2 * R + 1, 0.0);
    const double norm = 1.0 / std::sqrt(2.0 * std::numbers::pi * A);
    auto phi = [&](std::ptrdiff_t d) {
      const double x = d * h_;
      return norm * std::exp(-x * x / (2.0 * A));
    };
    double prev = phi(-1), cur = phi(0);
    for (std::ptrdiff_t d = 0; d <= R; ++d) {
      const double next = phi(d + 1);
      const double v = (prev - 2.0 * cur + next) / h_;
      k[R + d] = v;
      k[R - d] = v;
      prev = cur;
      cur = next;
    }
  }

  double a_at(double t, double x, const std::vector<double>& slots) const {
    double s = 0.0;
    model_.sigma_raw(t, {&x, 1}, slots, {&s, 1});
    return s * s;
  }

  std::ptrdiff_t window(double A) const {
    const double R = std::ceil(kWindowSd * std::sqrt(A) / h_) + 1.0;
    return static_cast<std::ptrdiff_t>(std::min(R, static_cast<double>(m_)));
  }

  const Model& model_;
  double x0_, lo_, h_;
  std::size_t m_;
  std::vector<double> times_;
  std::vector<Point> points_;
  std::vector<std::size_t> row_begin_;
  bool space_free_ = true, drift_zero_ = false;
  std::vector<double> drift_, diff_;
  double s_ = 0.0, du_ = 1.0;
  std::size_t table_ = 1;
  std::vector<double> cum_;
  std::vector<std::vector<double>> kernels_;
  std::vector<std::ptrdiff_t> radius_;
  std::vector<std::vector<double>> qnode_, qpoint_;
};

double row_mass(const std::vector<double>& row, double h) {
  double m = 0.0;
  for (double v : row) m += v;
  return m * h;
}

void check_model(const Model& model) {
  if (model.dim() != 1) throw DomainError("duhamel solver requires dim 1, model has dim " + std::to_string(model.dim()));
}

double apply(const Model& model, const Flow& mu, const Flow& nu, const DuhamelGrid& grid,
             const std::function<double(double)>& f, double s, double t, double tol, Terms terms) {
  check_model(model);
  if (std::abs(s - grid.s) > 1e-12 * std::max(1.0, std::abs(s)))
    throw DomainError("remainder start time differs from the table start");
  const std::size_t row = grid.row_of(t);
  if (row == 0) return 0.0;
  std::vector<double> fz(grid.cells);
  for (std::size_t z = 0; z < grid.cells; ++z) fz[z] = f(grid.center(z));
  auto eval = [&](std::size_t gauss) {
    const std::vector<double> times(grid.times.begin(), grid.times.begin() + row + 1);
    Context ctx(model, mu, nu, grid.x0, grid.lo, grid.h, grid.cells, times, gauss, grid.options.cov_table, row);
    const std::vector<double> rem = ctx.remainder(row, grid.p, terms);
    double acc = 0.0;
    for (std::size_t z = 0; z < grid.cells; ++z) acc += fz[z] * rem[z];
    return acc * grid.h;
  };
  const double coarse = eval(grid.options.gauss);
  const double fine = eval(2 * grid.options.gauss);
  const double est = std::abs(fine - coarse);
  if (est > tol * std::max(1.0, std::abs(fine))) {
    std::ostringstream os;
    os << "remainder quadrature estimate " << est << " exceeds tolerance " << tol;
    throw AccuracyError(os.str());
  }
  return fine;
}

}  // namespace

Density DuhamelGrid::density(std::size_t row) const {
  if (row >= p.size()) throw DomainError("density row out of range");
  Density d;
  d.dim = 1;
  d.lo = {lo};
  d.hi = {hi()};
  d.shape = {cells};
  d.values = p[row];
  return d;
}

std::size_t DuhamelGrid::row_of(double time) const {
  for (std::size_t j = 0; j < times.size(); ++j)
    if (std::abs(times[j] - time) <= 1e-12 * std::max(1.0, std::abs(time))) return j;
  throw DomainError("time is not a node of the density table");
}

DuhamelGrid solve_density(const Model& model, const Flow& mu_flow, const Flow& nu_flow, double x0, double s,
                          double t, const DuhamelOptions& opt) {
  check_model(model);
  if (!(t > s)) throw DomainError("solve_density requires s < t");
  if (opt.cells < 8 || opt.time_nodes < 1 || opt.gauss < 1 || opt.cov_table < 1)
    throw DomainError("degenerate duhamel options");
  if (!mu_flow.covers(s, t) || !nu_flow.covers(s, t)) throw DomainError("flows do not cover [s, t]");
  const ModelConstants& mc = model.constants();
  const double tau = t - s;

  DuhamelGrid g;
  g.s = s;
  g.t = t;
  g.x0 = x0;
  g.options = opt;
  g.cells = opt.cells;
  const double width = 2.0 * (mc.b_sup * tau + 8.0 * std::sqrt(mc.K * tau));
  g.h = opt.cell_width > 0.0 ? opt.cell_width : width / opt.cells;
  if (tau < 4.0 * g.h * g.h / mc.K) throw DomainError("t - s is below the grid resolution limit 4h^2/K");
  const std::size_t mid = opt.cells / 2;
  g.lo = x0 - (mid + 0.5) * g.h;  // x0 is the centre of cell `mid`

  const std::size_t J = opt.time_nodes;
  g.times.resize(J + 1);
  for (std::size_t j = 0; j <= J; ++j) {
    const double u = static_cast<double>(j) / J;
    g.times[j] = s + tau * u * u;
  }
  g.times[J] = t;

  Context ctx(model, mu_flow, nu_flow, x0, g.lo, g.h, g.cells, g.times, opt.gauss, opt.cov_table, 0);
  std::vector<std::vector<double>> Q(J + 1);
  for (std::size_t j = 1; j <= J; ++j) Q[j] = ctx.q_row(j);

  std::vector<std::vector<double>> P(J + 1);
  P[0].assign(g.cells, 0.0);
  P[0][mid] = 1.0 / g.h;
  for (std::size_t j = 1; j <= J; ++j) P[j] = Q[j];

  bool converged = false;
  for (std::size_t it = 1; it <= opt.max_iterations; ++it) {
    std::vector<std::vector<double>> next = P;
    std::vector<std::vector<double>>& src = opt.gauss_seidel ? next : P;
    double res = 0.0;
    for (std::size_t j = 1; j <= J; ++j) {
      std::vector<double> rem = ctx.remainder(j, src, Terms::both);
      for (std::size_t z = 0; z < g.cells; ++z) {
        const double v = Q[j][z] + rem[z];
        if (!std::isfinite(v)) throw NumericError("non-finite density in Picard sweep");
        res = std::max(res, std::abs(v - P[j][z]));
        next[j][z] = v;
      }
    }
    P.swap(next);
    g.residuals.push_back(res);
    g.iterations = it;
    if (res < opt.tol) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    std::ostringstream os;
    os << "Picard iteration did not converge in " << opt.max_iterations << " sweeps; residuals:";
    for (double r : g.residuals) os << ' ' << r;
    throw ConvergenceError(os.str());
  }

  for (std::size_t j = 1; j <= J; ++j) {
    for (double& v : P[j]) {
      if (v < 0.0) {
        g.clamp_magnitude = std::max(g.clamp_magnitude, -v);
        v = 0.0;
      }
    }
  }
  g.masses.resize(J + 1);
  for (std::size_t j = 0; j <= J; ++j) {
    g.masses[j] = row_mass(P[j], g.h);
    if (j > 0) g.max_mass_deviation = std::max(g.max_mass_deviation, std::abs(g.masses[j] - 1.0));
  }
  g.p = std::move(P);
  return g;
}

double remainder_R(const Model& model, const Flow& mu_flow, const Flow& nu_flow, const DuhamelGrid& grid,
                   const std::function<double(double)>& f, double s, double t, double tol) {
  return apply(model, mu_flow, nu_flow, grid, f, s, t, tol, Terms::both);
}

double remainder_drift_only(const Model& model, const Flow& mu_flow, const Flow& nu_flow,
                            const DuhamelGrid& grid, const std::function<double(double)>& f, double s,
                            double t, double tol) {
  if (!model.sigma_space_free())
    throw DomainError("drift-only remainder requires a diffusion free of the space variable");
  return apply(model, mu_flow, nu_flow, grid, f, s, t, tol, Terms::drift);
}

double variation_against_samples(const DuhamelGrid& g, std::size_t row, const Measure& samples,
                                 double bandwidth) {
  if (samples.dim() != 1) throw DomainError("samples must be one dimensional");
  const double bw = bandwidth > 0.0 ? bandwidth : silverman_bandwidth(samples);
  const GridSpec grid{{g.lo}, {g.hi()}, {g.cells}};
  const Density a = to_density(grid_measure(g.density(row)), grid, bw);
  const Density b = to_density(samples, grid, bw);
  return weighted_variation(a, b, 0.0).value;
}

void write_table_csv(const DuhamelGrid& g, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  os << "t,x,p\n";
  os.precision(12);
  for (std::size_t j = 1; j < g.p.size(); ++j)
    for (std::size_t z = 0; z < g.cells; ++z) os << g.times[j] << ',' << g.center(z) << ',' << g.p[j][z] << '\n';
}

void write_residuals_csv(const DuhamelGrid& g, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  os << "iter,residual\n";
  os.precision(12);
  for (std::size_t i = 0; i < g.residuals.size(); ++i) os << i + 1 << ',' << g.residuals[i] << '\n';
}

nlohmann::json summary_json(const DuhamelGrid& g) {
  return {{"s", g.s},
          {"t", g.t},
          {"x0", g.x0},
          {"cells", g.cells},
          {"cell_width", g.h},
          {"time_nodes", g.times.size() - 1},
          {"iterations", g.iterations},
          {"residuals", g.residuals},
          {"clamp_magnitude", g.clamp_magnitude},
          {"max_mass_deviation", g.max_mass_deviation}};
}

}  // namespace mvsde
