#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvsde/coefficients.hpp"
#include "mvsde/errors.hpp"
#include "mvsde/measures.hpp"
#include "mvsde/metrics.hpp"
#include "mvsde/sde_engine.hpp"

namespace mvsde {

/// Ratio ≥ 1 on three consecutive iterations at the largest admissible λ.
class NonContractionError : public ConvergenceError {
 public:
  NonContractionError(const std::string& what, double lambda, std::vector<double> ratios)
      : ConvergenceError(what), lambda_(lambda), ratios_(std::move(ratios)) {}
  double lambda() const noexcept { return lambda_; }
  const std::vector<double>& ratios() const noexcept { return ratios_; }

 private:
  double lambda_;
  std::vector<double> ratios_;
};

/// Distance history of an iteration with λ escalation: λ doubles while the
/// last three ρ_λ ratios are ≥ 1, at most max_doublings times, then
/// NonContractionError. Ratios are truncated once the unweighted distance
/// of the denominator is below floor.
class ContractionMonitor {
 public:
  ContractionMonitor(double lambda, std::size_t max_doublings, double floor, std::string what);
  /// Records distances between the newest successive iterates; returns
  /// their unweighted sup, which dominates every ρ_λ.
  double add(FlowDistances d);
  std::vector<double> values(double lambda) const;
  std::vector<double> ratios(double lambda) const;
  std::vector<double> ratios() const { return ratios(lambda_); }
  double lambda() const noexcept { return lambda_; }
  std::size_t doublings() const noexcept { return doublings_; }
  const std::vector<FlowDistances>& history() const noexcept { return history_; }

 private:
  bool stalled() const;
  double lambda_;
  std::size_t max_doublings_;
  double floor_;
  std::string what_;
  std::vector<FlowDistances> history_;
  std::size_t doublings_ = 0;
};

struct FixedPointOptions {
  std::size_t max_inner = 40;
  std::size_t max_outer = 40;
  /// λ may double this many times on observed non-contraction.
  std::size_t max_doublings = 10;
  /// Distances below this are treated as converged (ratios truncated).
  double floor = 1e-12;
  /// Start each inner solve from the previous inner fixed point.
  bool warm_start = true;
  /// Inner tolerance max(tol, inner_relative · previous outer distance);
  /// 0 solves every inner problem to tol. The first outer step uses 0.1.
  double inner_relative = 0.1;
  /// Estimate the Monte Carlo floor with an independent seed after solving.
  bool estimate_noise = true;
  FlowMetricOptions metric{.max_atoms = 100, .seed = 0x7a3c91, .variation = VariationMode::density};
};

/// Output nodes of the solver: cfg.report_times when given, otherwise
/// eleven equally spaced nodes on [t0, t1].
std::vector<double> solver_grid(const SimConfig& cfg);

/// Law flow of dX = b(X, μ)dt + σ(X, ν)dW from γ, with common random numbers.
Flow psi_map(const Model& model, const Measure& gamma, const Flow& mu_flow, const Flow& nu_flow,
             const SimConfig& cfg);

struct InnerStats {
  std::size_t iterations = 0;
  std::vector<double> distances;  // unweighted sup distance between successive iterates
  double lambda = 0.0;            // after any escalation
};

/// ν ← Ψ(ν) from ν⁰ = constant γ or `start`. Stops once the unweighted
/// sup_t(W_k + W_η) between successive iterates is below tol, which
/// implies ρ_λ < tol. λ doubles when three successive ρ_λ ratios are ≥ 1.
Flow inner_solve(const Model& model, const Measure& gamma, const Flow& mu_flow, const SimConfig& cfg,
                 double lambda, double tol, const FixedPointOptions& opt = {}, InnerStats* stats = nullptr,
                 const Flow* start = nullptr);

/// Law flow of the SDE with drift flow μ and its own diffusion-consistent flow.
Flow phi_map(const Model& model, const Measure& gamma, const Flow& mu_flow, const SimConfig& cfg, double lambda,
             double tol, const FixedPointOptions& opt = {}, InnerStats* stats = nullptr,
             const Flow* start = nullptr);

struct SolveReport {
  Flow solution;
  std::vector<std::size_t> inner_iterations;
  std::size_t outer_iterations = 0;
  std::vector<double> outer_distances;      // ρ̃_λ at lambda_used between successive outer iterates
  std::vector<double> contraction_history;  // ratios of outer_distances
  std::vector<double> outer_sup_distances;  // the same at λ = 0
  std::vector<double> contraction_history_sup;
  std::vector<FlowDistances> outer_history;
  double lambda_start = 0.0;
  double lambda_used = 0.0;
  double tol = 0.0;
  double residual = 0.0;     // last outer distance
  double noise_floor = -1.0; // unweighted ρ̃ against an independent-seed rerun; < 0 when not estimated
  bool converged = false;
};

nlohmann::json to_json(const SolveReport& r);

/// Outer iteration μ ← Φ(μ) until the unweighted sup_t(W_k + ‖·‖_{k,var})
/// between successive iterates is below tol.
SolveReport solve_mvsde(const Model& model, const Measure& gamma, const SimConfig& cfg, double tol,
                        const FixedPointOptions& opt = {});

struct LambdaThresholds {
  double l0 = 1.0, l1 = 1.0, l2 = 1.0;
};
/// λ₀ = 1 ∨ (2Γ(β/2))^{2/β}, λ₁ = λ₀ ∨ (3m)^{2/(β∧η)}, λ₂ = λ₁ ∨ (2m²)^{2/(β∧η)}
/// with m = γ(1 + |·|^k) and unit proof constants.
LambdaThresholds lambda_thresholds(const ModelConstants& c, double gamma_moment);
/// Starting λ of solve_mvsde: λ₂.
double lambda_schedule(const ModelConstants& c, double gamma_moment);
/// m = γ(1 + |·|^k).
double schedule_moment(const Measure& gamma, double k);

struct RateSeries {
  std::vector<double> ratios;
  bool truncated = false;  // a denominator fell below the floor
  bool geometric = false;  // every ratio < 1
};

/// Ratios d_{n+1}/d_n of a distance sequence.
RateSeries contraction_ratios(const std::vector<double>& distances, double floor = 1e-12);
/// ρ_λ(x_{n+1}, x_n)/ρ_λ(x_n, x_{n−1}) over a history of ≥ 3 flows.
RateSeries contraction_rate(const std::vector<Flow>& history, double lambda, double k, double eta,
                            const FlowMetricOptions& opt = {}, double floor = 1e-12);

}  // namespace mvsde
