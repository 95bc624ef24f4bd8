#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvsde/coefficients.hpp"

namespace mvsde {

struct AuditWitness {
  std::string ratio;
  double value = 0.0;
  std::size_t sample = 0;
  double t = 0.0;
  std::vector<double> x, y;
  std::vector<double> mu1_atoms, mu2_atoms;  // row-major, dim per atom, equal weights
};

struct AuditReport {
  std::size_t samples = 0;
  std::uint64_t seed = 0;
  double K = 0.0;
  /// Max observed ratio per inequality. Keys:
  ///   sigma_holder_space  ‖σ(x,μ)−σ(y,μ)‖ / |x−y|^β
  ///   sigma_measure       ‖σ(x,μ¹)−σ(x,μ²)‖ / (W_η+W_k)
  ///   sigma_joint         ‖σ(x,μ¹)−σ(y,μ²)‖ / (|x−y|^β+W_η+W_k)
  ///   sigma_grad          finite-difference ‖∇σ‖ (compared with grad_sigma_bound)
  ///   drift_measure       |b(x,μ¹)−b(x,μ²)| / (‖μ¹−μ²‖_{k,var}+W_k)
  ///   drift_kvar          |b(x,μ¹)−b(x,μ²)| / ‖μ¹−μ²‖_{k,var}   (reported only)
  ///   drift_tv            |b(x,μ¹)−b(x,μ²)| / (‖μ¹−μ²‖_var+W_k)
  ///   a_mixed             mixed second difference of σσ* / (|x−y|^β (W_η+W_k))
  ///   sigma_measure_wk, a_mixed_wk   same with W_k alone
  ///   spectrum_min, spectrum_max, drift_bound
  std::map<std::string, double> ratios;
  std::map<std::string, AuditWitness> witnesses;
  std::vector<AuditWitness> violations;
  bool sigma_space_free = false;
  bool condition_i = false;
  bool condition_ii = false;
  bool drift_tv_lipschitz = false;

  bool passed() const { return violations.empty(); }
  /// Theorem-level regularity hypothesis: TV-Lipschitz drift and (i) or (ii).
  bool regularity_hypothesis() const { return drift_tv_lipschitz && (condition_i || condition_ii); }
};

/// Sampled audit of the declared constants. x, y ~ N(0, 4I); μ¹, μ² are
/// 8-atom uniform measures on [−3,3]^d, with every other pair a small
/// perturbation of the first measure.
AuditReport lipschitz_audit(const Model& model, std::size_t n_samples, std::uint64_t seed);

/// Throws AuditFailure listing the first witness when the audit failed.
void require_pass(const AuditReport& r);

nlohmann::json to_json(const AuditReport& r);

}  // namespace mvsde
