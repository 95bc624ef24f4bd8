#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mvsde/coefficients.hpp"
#include "mvsde/measures.hpp"

namespace mvsde {

/// a = ∫_s^t (σσ*)(z, ν_u) du.
struct FrozenCovariance {
  Eigen::MatrixXd a;
  double s = 0.0, t = 0.0;
  std::vector<double> z;
  std::string flow_id;

  static FrozenCovariance scaled_identity(std::size_t dim, double tau, double s = 0.0);
};

/// Composite midpoint in time, with the interval split at flow nodes and
/// `substeps` midpoints per piece. Checks the spectrum against
/// [(t−s)/K, (t−s)K] (ModelConstantsError).
FrozenCovariance frozen_covariance(const Model& model, const Flow& flow, std::span<const double> z,
                                   double s, double t, std::size_t substeps = 64);

/// Gaussian kernel with cached inverse and determinant.
class FrozenKernel {
 public:
  explicit FrozenKernel(const FrozenCovariance& cov);
  explicit FrozenKernel(const Eigen::MatrixXd& a);

  std::size_t dim() const noexcept { return static_cast<std::size_t>(inv_.rows()); }
  /// q(x, y), a function of u = y − x.
  double density_u(const Eigen::VectorXd& u) const;
  double density(std::span<const double> x, std::span<const double> y) const;
  /// Gradient and Hessian in x.
  void derivatives_u(const Eigen::VectorXd& u, double& q, Eigen::VectorXd& grad, Eigen::MatrixXd& hess) const;
  const Eigen::MatrixXd& inverse() const noexcept { return inv_; }

 private:
  Eigen::MatrixXd inv_;
  double norm_ = 0.0;
};

double q_density(const FrozenCovariance& cov, std::span<const double> x, std::span<const double> y);

struct KernelDerivatives {
  double value = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;
};

KernelDerivatives q_derivatives(const FrozenCovariance& cov, std::span<const double> x,
                                std::span<const double> y);

/// (4Kπ(t−s))^{−d/2} exp(−|y−x|²/(4K(t−s))).
double comparison_kernel(double K, double s, double t, std::span<const double> x, std::span<const double> y);

/// ∫ |∇^i q(x,y)| |y−x|^ε dy on a ±8 sd grid (1024 cells in 1D, 256² in 2D),
/// x = 0. |∇q| is Euclidean, |∇²q| the operator norm. Throws QuadratureError
/// if the grid catches less than 1 − 1e-8 of the kernel mass.
double moment_integral_g1(const FrozenCovariance& cov, int i, double eps);

struct PerturbationResult {
  double value = 0.0;     // ∫ |∇^i q¹ − ∇^i q²| |y−x|^ε dy
  double scale = 0.0;     // (t−s)^{−1}∫_s^t (W_η + W_k)(ν¹_u, ν²_u) du
  double fitted_c = 0.0;  // value / ((t−s)^{(−i+ε)/2} scale)
};

PerturbationResult perturbation_integral_g2(const Model& model, const Flow& flow1, const Flow& flow2,
                                            std::span<const double> z, double s, double t, int i,
                                            double eps);

/// Smallest c with |∇^i q| ≤ c (t−s)^{−i/2} q̃ over a cloud of offsets
/// u = √(t−s)·v, v on a grid in [−10, 10]^d.
double domination_constant(const FrozenCovariance& cov, double K, int i);

/// ∫|N(0,v1) − N(0,v2)| in 1D.
double centered_normal_l1(double var1, double var2);

}  // namespace mvsde
