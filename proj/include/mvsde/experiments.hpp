#pragma once

#include "mvsde/experiment_config.hpp"
#include "mvsde/measures.hpp"
#include "mvsde/report.hpp"

namespace mvsde {

/// Sampled audit of the model only; failing ratios become failed checks.
Report run_audit(const ExperimentConfig& c);

/// Fixed-point solve from γ¹. With params.flow_check the solve is repeated
/// on [t/2, t] from the law at t/2 and compared in W_k with 3× the W_k
/// noise floor at t.
Report run_solve(const ExperimentConfig& c);

/// TV and W_k between the solutions from γ¹ and γ² with common noise.
/// Slope of TV against t on [t_min, fit_span t_min] must lie in
/// [slope_min, slope_max]; max/min of W_k(t)/W_k(γ¹, γ²) below wk_ratio_spread.
/// Refuses models whose audit does not establish the regularity hypothesis.
Report run_regularity(const ExperimentConfig& c);

/// Diracs δ_x, δ_y moved by the frozen flows of the γ¹ solution. TV slope
/// −1/2 ± slope_tolerance; W_ε slope at least (−1+ε)/2 − slope_tolerance,
/// and within ± slope_tolerance of 0 for ε = 1.
Report run_gradient(const ExperimentConfig& c);

/// Response sup_t W_k of the frozen SDE to one perturbed driver at a time
/// (initial law, diffusion flow, drift flow shifted by δ). Log-log slope
/// against δ must be 1 ± linear_tolerance.
Report run_stability(const ExperimentConfig& c);

/// solve_density against the simulated law at each horizon, and against
/// params.closed_form when given.
Report run_duhamel_validation(const ExperimentConfig& c);

Report run_experiment(const ExperimentConfig& c);

/// Every atom moved by δ along the first axis.
Measure shift_measure(const Measure& m, double delta);
Flow shift_flow(const Flow& f, double delta);

/// Trapezoid rule over the nodes.
double time_integral(const std::vector<double>& t, const std::vector<double>& v);

}  // namespace mvsde
