#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "mvsde/coefficients.hpp"
#include "mvsde/measures.hpp"

namespace mvsde {

struct SimConfig {
  std::size_t n_particles = 10000;
  double dt = 1e-3;
  double t0 = 0.0;
  double t1 = 1.0;
  std::uint64_t seed = 1;
  /// With crn the Brownian increment of particle i over the step starting
  /// at time t depends only on (seed, i, t); otherwise `stream` enters too.
  bool crn = true;
  std::uint64_t stream = 0;
  /// Output nodes. Empty: the drift flow's nodes inside [t0, t1] (plus t0
  /// and t1).
  std::vector<double> report_times;
};

nlohmann::json to_json(const SimConfig& c);

/// Euler–Maruyama for dX = b_t(X, μ_t)dt + σ_t(X, ν_t)dW started from
/// `init` at t0. Returns the empirical law at each output node; particle
/// order is preserved across nodes. The returned flow carries the model's
/// functional values of the simulated law at every step.
Flow simulate_frozen(const Model& model, const Flow& mu_flow, const Flow& nu_flow, const Measure& init,
                     const SimConfig& cfg);

/// Output nodes used by simulate_frozen for this configuration.
std::vector<double> output_times(const Flow& mu_flow, const SimConfig& cfg);

struct NntReport {
  double p = 2.0;
  std::vector<double> times;    // t − t0
  std::vector<double> moments;  // E|X_t − X_{t0}|^p
  double C = 0.0;
  double alpha = 0.0;
  double tolerance = 0.05;
  bool passed = false;  // alpha ≥ p/2 − tolerance
};

NntReport moment_check_nnt(const Model& model, const Flow& mu_flow, const Flow& nu_flow, const Measure& init,
                           const SimConfig& cfg, double p, double tolerance = 0.05);

nlohmann::json to_json(const NntReport& r);

}  // namespace mvsde
