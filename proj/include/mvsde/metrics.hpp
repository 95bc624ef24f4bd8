#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvsde/measures.hpp"

namespace mvsde {

enum class DistanceMethod { exact_1d, lp_oracle, dual_bound, grid_l1 };

std::string to_string(DistanceMethod m);

struct DistanceReport {
  double value = 0.0;
  DistanceMethod method = DistanceMethod::exact_1d;
  double gap = 0.0;
  std::size_t subsample = 0;  // atoms per side when subsampled, else 0
};

nlohmann::json to_json(const DistanceReport& r);

/// Largest n·m handled by the exact LP.
inline constexpr std::size_t kLpBudget = 10000;

/// Exact 1D transport by the monotone coupling, k ≥ 1.
DistanceReport wasserstein_1d(const Measure& m1, const Measure& m2, double k);

/// Exact transport with cost |x−y|^p on the (deduplicated) supports.
/// Returns cost^{1/(p∨1)}. Throws SizeError above kLpBudget.
DistanceReport ot_lp(const Measure& m1, const Measure& m2, double exponent);

/// Quantile-stratified subsample: sort by the first coordinate, then
/// systematic resampling. Used wherever large ensembles enter the LP; both
/// sides of a distance use the same seed, so they are cut at the same ranks.
Measure subsample_for_lp(const Measure& m, std::size_t atoms, std::uint64_t seed);

/// W_k for any dimension: exact_1d in 1D, otherwise LP (subsampled above budget).
DistanceReport wasserstein(const Measure& m1, const Measure& m2, double k,
                           std::size_t max_atoms = 100, std::uint64_t seed = 0);

/// Transport distance with concave cost |x−y|^η, η ∈ (0,1].
DistanceReport wasserstein_eta(const Measure& m1, const Measure& m2, double eta,
                               std::size_t max_atoms = 100, std::uint64_t seed = 0);

/// ∫ w_θ |p−q| on a shared grid with w_θ = 1+|x|^θ, and w_0 = 1 so that
/// θ = 0 is the total variation sup_{|f|≤1}|μ(f)−ν(f)| ∈ [0,2].
DistanceReport weighted_variation(const Density& d1, const Density& d2, double theta);

/// Σ_x |w₁(x)−w₂(x)| w_θ(x) over the union of atoms (exact coordinate match).
DistanceReport weighted_variation_atoms(const Measure& m1, const Measure& m2, double theta);

/// Weight function used by both weighted variation routines.
double variation_weight(double norm_x, double theta);

/// Densities of two ensembles on one grid with one pooled Silverman
/// bandwidth (or the given bandwidth when positive).
std::pair<Density, Density> shared_densities(const Measure& a, const Measure& b,
                                             double bandwidth = 0.0, std::size_t cells = 0);

enum class VariationMode { atoms, density };

struct FlowMetricOptions {
  std::size_t max_atoms = 100;
  std::uint64_t seed = 0x7a3c91;
  VariationMode variation = VariationMode::atoms;
  std::size_t density_cells = 0;  // 0: 512 in 1D, 128 in 2D
};

/// Per-node distances between two flows on a shared grid; value(λ) gives
/// sup_t e^{−λt}(first + second).
struct FlowDistances {
  std::vector<double> times;
  std::vector<double> first;   // W_k
  std::vector<double> second;  // W_η or ‖·‖_{k,var}
  double value(double lambda) const;
};

FlowDistances flow_distances_eta(const Flow& f1, const Flow& f2, double k, double eta,
                                 const FlowMetricOptions& opt = {});
FlowDistances flow_distances_var(const Flow& f1, const Flow& f2, double k,
                                 const FlowMetricOptions& opt = {});

/// sup_t e^{−λt}(W_k + W_η). λ ≥ 0.
double rho_lambda(const Flow& f1, const Flow& f2, double lambda, double k, double eta,
                  const FlowMetricOptions& opt = {});
/// sup_t e^{−λt}(W_k + ‖·‖_{k,var}). λ ≥ 0.
double rho_tilde_lambda(const Flow& f1, const Flow& f2, double lambda, double k,
                        const FlowMetricOptions& opt = {});

}  // namespace mvsde
