#include "mvsde/gaussian_kernel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mvsde/errors.hpp"
#include "mvsde/metrics.hpp"
#include "mvsde/stats.hpp"

namespace mvsde {

FrozenCovariance FrozenCovariance::scaled_identity(std::size_t dim, double tau, double s) {
  FrozenCovariance c;
  c.a = tau * Eigen::MatrixXd::Identity(dim, dim);
  c.s = s;
  c.t = s + tau;
  c.z.assign(dim, 0.0);
  c.flow_id = "identity";
  return c;
}

FrozenCovariance frozen_covariance(const Model& model, const Flow& flow, std::span<const double> z,
                                   double s, double t, std::size_t substeps) {
  if (!(s < t)) throw DomainError("frozen covariance needs s < t");
  if (z.size() != model.dim()) throw DomainError("freeze point has the wrong dimension");
  if (!flow.covers(s, t)) throw DomainError("flow does not cover [s, t]");
  substeps = std::max<std::size_t>(substeps, 1);
  std::vector<double> cuts{s};
  for (double u : flow.times())
    if (u > s && u < t) cuts.push_back(u);
  cuts.push_back(t);

  const std::size_t d = model.dim();
  FlowFunctionals slots(model, flow, FlowFunctionals::Part::diffusion);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(d, d);
  for (std::size_t p = 0; p + 1 < cuts.size(); ++p) {
    const double h = (cuts[p + 1] - cuts[p]) / substeps;
    for (std::size_t q = 0; q < substeps; ++q) {
      const double u = cuts[p] + (q + 0.5) * h;
      a += h * model.a_matrix(u, z, slots.at(u));
    }
  }
  a = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  const double K = model.constants().K, len = t - s, tol = 1e-9;
  if (es.eigenvalues().minCoeff() < len / K * (1 - tol) || es.eigenvalues().maxCoeff() > len * K * (1 + tol))
    throw ModelConstantsError("frozen covariance spectrum leaves [(t-s)/K, (t-s)K]");
  FrozenCovariance c;
  c.a = a;
  c.s = s;
  c.t = t;
  c.z.assign(z.begin(), z.end());
  c.flow_id = flow.track ? flow.track->signature : "flow";
  return c;
}

FrozenKernel::FrozenKernel(const FrozenCovariance& cov) : FrozenKernel(cov.a) {}

FrozenKernel::FrozenKernel(const Eigen::MatrixXd& a) {
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) throw NumericError("covariance is not positive definite");
  inv_ = llt.solve(Eigen::MatrixXd::Identity(a.rows(), a.cols()));
  double logdet = 0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) logdet += 2 * std::log(llt.matrixL()(i, i));
  norm_ = std::exp(-0.5 * (a.rows() * std::log(2 * std::numbers::pi) + logdet));
}

double FrozenKernel::density_u(const Eigen::VectorXd& u) const {
  return norm_ * std::exp(-0.5 * u.dot(inv_ * u));
}

double FrozenKernel::density(std::span<const double> x, std::span<const double> y) const {
  Eigen::VectorXd u(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) u[i] = y[i] - x[i];
  return density_u(u);
}

void FrozenKernel::derivatives_u(const Eigen::VectorXd& u, double& q, Eigen::VectorXd& grad,
                                 Eigen::MatrixXd& hess) const {
  q = density_u(u);
  const Eigen::VectorXd w = inv_ * u;
  grad = q * w;
  hess = q * (w * w.transpose() - inv_);
}

double q_density(const FrozenCovariance& cov, std::span<const double> x, std::span<const double> y) {
  return FrozenKernel(cov).density(x, y);
}

KernelDerivatives q_derivatives(const FrozenCovariance& cov, std::span<const double> x,
                                std::span<const double> y) {
  const FrozenKernel k(cov);
  Eigen::VectorXd u(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) u[i] = y[i] - x[i];
  KernelDerivatives r;
  k.derivatives_u(u, r.value, r.gradient, r.hessian);
  return r;
}

double comparison_kernel(double K, double s, double t, std::span<const double> x, std::span<const double> y) {
  if (!(s < t)) throw DomainError("comparison kernel needs s < t");
  const double tau = t - s;
  double r2 = 0;
  for (std::size_t i = 0; i < x.size(); ++i) r2 += (y[i] - x[i]) * (y[i] - x[i]);
  return std::pow(4 * K * std::numbers::pi * tau, -0.5 * x.size()) * std::exp(-r2 / (4 * K * tau));
}

namespace {

double op_norm(const Eigen::MatrixXd& m) {
  if (m.size() == 1) return std::abs(m(0, 0));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

double derivative_size(int i, double q, const Eigen::VectorXd& g, const Eigen::MatrixXd& h) {
  return i == 0 ? q : i == 1 ? g.norm() : op_norm(h);
}

// Midpoint quadrature over a ±8 sd box around 0 of f(u, w) with w the cell volume.
template <class F>
void box_quadrature(const std::vector<double>& sd, F&& f) {
  const std::size_t d = sd.size();
  if (d == 0 || d > 2) throw DomainError("grid quadrature supports dim 1 or 2");
  const std::size_t n = d == 1 ? 1024 : 256;
  std::vector<double> h(d);
  double vol = 1;
  for (std::size_t a = 0; a < d; ++a) {
    h[a] = 16 * sd[a] / n;
    vol *= h[a];
  }
  Eigen::VectorXd u(d);
  if (d == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      u[0] = -8 * sd[0] + (i + 0.5) * h[0];
      f(u, vol);
    }
  } else {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        u[0] = -8 * sd[0] + (i + 0.5) * h[0];
        u[1] = -8 * sd[1] + (j + 0.5) * h[1];
        f(u, vol);
      }
  }
}

std::vector<double> axis_sd(const Eigen::MatrixXd& a) {
  std::vector<double> sd;
  for (Eigen::Index i = 0; i < a.rows(); ++i) sd.push_back(std::sqrt(a(i, i)));
  return sd;
}

}  // namespace

double moment_integral_g1(const FrozenCovariance& cov, int i, double eps) {
  if (i < 0 || i > 2) throw DomainError("derivative order must be 0, 1 or 2");
  if (!(eps >= 0)) throw DomainError("eps must be nonnegative");
  const FrozenKernel k(cov);
  double total = 0, mass = 0;
  double q;
  Eigen::VectorXd g;
  Eigen::MatrixXd h;
  box_quadrature(axis_sd(cov.a), [&](const Eigen::VectorXd& u, double w) {
    k.derivatives_u(u, q, g, h);
    mass += q * w;
    const double r = u.norm();
    total += derivative_size(i, q, g, h) * (eps == 0 ? 1.0 : std::pow(r, eps)) * w;
  });
  if (mass < 1 - 1e-8) throw QuadratureError("quadrature grid misses kernel mass: " + std::to_string(mass));
  return total;
}

PerturbationResult perturbation_integral_g2(const Model& model, const Flow& flow1, const Flow& flow2,
                                            std::span<const double> z, double s, double t, int i,
                                            double eps) {
  if (i < 0 || i > 2) throw DomainError("derivative order must be 0, 1 or 2");
  if (flow1.times() != flow2.times()) throw DomainError("flows are on different time grids");
  const FrozenCovariance c1 = frozen_covariance(model, flow1, z, s, t);
  const FrozenCovariance c2 = frozen_covariance(model, flow2, z, s, t);
  const FrozenKernel k1(c1), k2(c2);
  std::vector<double> sd = axis_sd(c1.a), sd2 = axis_sd(c2.a);
  for (std::size_t a = 0; a < sd.size(); ++a) sd[a] = std::max(sd[a], sd2[a]);
  PerturbationResult r;
  double m1 = 0, m2 = 0, q1, q2;
  Eigen::VectorXd g1, g2;
  Eigen::MatrixXd h1, h2;
  box_quadrature(sd, [&](const Eigen::VectorXd& u, double w) {
    k1.derivatives_u(u, q1, g1, h1);
    k2.derivatives_u(u, q2, g2, h2);
    m1 += q1 * w;
    m2 += q2 * w;
    const double diff = derivative_size(i, q1 - q2, g1 - g2, h1 - h2);
    r.value += std::abs(diff) * (eps == 0 ? 1.0 : std::pow(u.norm(), eps)) * w;
  });
  if (std::min(m1, m2) < 1 - 1e-8) throw QuadratureError("quadrature grid misses kernel mass");

  // time average of the flow distance, flows piecewise constant between nodes
  const double k = model.constants().k, eta = model.constants().eta;
  std::vector<double> cuts{s};
  for (double u : flow1.times())
    if (u > s && u < t) cuts.push_back(u);
  cuts.push_back(t);
  double acc = 0;
  for (std::size_t p = 0; p + 1 < cuts.size(); ++p) {
    const std::size_t n = flow1.node_index(cuts[p]);
    const Measure &a = flow1.at_node(n), &b = flow2.at_node(n);
    acc += (cuts[p + 1] - cuts[p]) * (wasserstein(a, b, k).value + wasserstein_eta(a, b, eta).value);
  }
  r.scale = acc / (t - s);
  const double rate = std::pow(t - s, (-i + eps) / 2);
  r.fitted_c = r.scale > 0 ? r.value / (rate * r.scale) : 0.0;
  return r;
}

double domination_constant(const FrozenCovariance& cov, double K, int i) {
  if (i < 0 || i > 2) throw DomainError("derivative order must be 0, 1 or 2");
  const FrozenKernel k(cov);
  const std::size_t d = cov.a.rows();
  const double tau = cov.t - cov.s;
  const std::size_t n = d == 1 ? 2001 : 161;
  std::vector<double> zero(d, 0.0), uy(d);
  double best = 0, q;
  Eigen::VectorXd u(d), g;
  Eigen::MatrixXd h;
  auto visit = [&] {
    k.derivatives_u(u, q, g, h);
    for (std::size_t a = 0; a < d; ++a) uy[a] = u[a];
    const double qt = comparison_kernel(K, cov.s, cov.t, zero, uy);
    if (qt > 1e-300) best = std::max(best, derivative_size(i, q, g, h) * std::pow(tau, 0.5 * i) / qt);
  };
  for (std::size_t a = 0; a < n; ++a) {
    u[0] = std::sqrt(tau) * (-10 + 20.0 * a / (n - 1));
    if (d == 1) {
      visit();
      continue;
    }
    for (std::size_t b = 0; b < n; ++b) {
      u[1] = std::sqrt(tau) * (-10 + 20.0 * b / (n - 1));
      visit();
    }
  }
  return best;
}

double centered_normal_l1(double var1, double var2) {
  if (var1 == var2) return 0.0;
  const double s1 = std::sqrt(std::min(var1, var2)), s2 = std::sqrt(std::max(var1, var2));
  const double xs = std::sqrt(2 * s1 * s1 * s2 * s2 * std::log(s2 / s1) / (s2 * s2 - s1 * s1));
  return 4 * (normal_cdf(xs / s1) - normal_cdf(xs / s2));
}

}  // namespace mvsde
