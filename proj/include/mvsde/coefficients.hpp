#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "mvsde/expression.hpp"
#include "mvsde/measures.hpp"

namespace mvsde {

struct ModelConstants {
  double K = 2.0;
  double k = 1.0;
  double eta = 1.0;
  double beta = 1.0;
  double b_sup = 0.0;
  double grad_sigma_bound = 0.0;
};

/// Drift b_t(x, μ) and diffusion σ_t(x, μ) built from composition
/// expressions over finitely many integral functionals μ(ψ).
///
/// Model document:
///   {"name": ..., "dim": d, "horizon": T,
///    "drift": {"components": [node, ...]},              d nodes
///    "diffusion": {"scalar": node} | {"matrix": [[node, ...], ...]},
///    "constants": {"K", "k", "eta", "beta", "b_sup", "grad_sigma_bound"}}
class Model {
 public:
  static Model from_json(const nlohmann::json& doc);
  static Model load(const std::filesystem::path& path);

  const std::string& name() const noexcept { return name_; }
  std::size_t dim() const noexcept { return dim_; }
  double horizon() const noexcept { return horizon_; }
  const ModelConstants& constants() const noexcept { return constants_; }
  const nlohmann::json& document() const noexcept { return doc_; }
  /// Stable identifier of the document, used to match recorded functional tracks.
  const std::string& signature() const noexcept { return signature_; }

  bool sigma_space_free() const noexcept { return sigma_space_free_; }
  bool sigma_distribution_free() const noexcept { return diffusion_fs_.empty(); }
  bool drift_distribution_free() const noexcept { return drift_fs_.empty(); }
  bool drift_zero() const noexcept { return drift_zero_; }
  bool scalar_diffusion() const noexcept { return scalar_; }
  /// True when no diffusion integrand depends on time, so functional
  /// values are constant between flow nodes.
  bool diffusion_functionals_time_free() const noexcept;
  bool drift_functionals_time_free() const noexcept;
  std::size_t n_drift_functionals() const noexcept { return drift_fs_.size(); }
  std::size_t n_diffusion_functionals() const noexcept { return diffusion_fs_.size(); }

  std::vector<double> drift_functionals(double t, const Measure& m) const {
    return eval_functionals(drift_fs_, t, m);
  }
  const std::vector<Functional>& drift_functional_list() const noexcept { return drift_fs_; }
  const std::vector<Functional>& diffusion_functional_list() const noexcept { return diffusion_fs_; }
  bool drift_space_free() const noexcept;
  std::vector<double> diffusion_functionals(double t, const Measure& m) const {
    return eval_functionals(diffusion_fs_, t, m);
  }
  /// Functional values of the flow at time t: taken from the flow's
  /// recorded track when it was produced by this model, otherwise computed
  /// on the node measure in force.
  std::vector<double> drift_functionals(double t, const Flow& f) const;
  std::vector<double> diffusion_functionals(double t, const Flow& f) const;

  /// Unchecked kernels for the inner loops. `out` has dim entries (drift)
  /// or dim*dim entries row-major (sigma).
  void drift_raw(double t, std::span<const double> x, std::span<const double> slots,
                 std::span<double> out) const;
  void sigma_raw(double t, std::span<const double> x, std::span<const double> slots,
                 std::span<double> out) const;
  /// Scalar σ value for scalar-diffusion models.
  double sigma_scalar_raw(double t, std::span<const double> x, std::span<const double> slots) const {
    return sigma_[0].eval(t, x, slots);
  }

  /// Checked evaluation: |b| ≤ b_sup (ModelConstantsError otherwise),
  /// non-finite values raise NumericError.
  Eigen::VectorXd eval_drift(double t, std::span<const double> x, const Measure& m) const;
  /// Checked evaluation: spectrum of σσ* inside [1/K, K].
  Eigen::MatrixXd eval_sigma(double t, std::span<const double> x, const Measure& m) const;

  Eigen::MatrixXd sigma_matrix(double t, std::span<const double> x, std::span<const double> slots) const;
  Eigen::MatrixXd a_matrix(double t, std::span<const double> x, std::span<const double> slots) const {
    const Eigen::MatrixXd s = sigma_matrix(t, x, slots);
    return s * s.transpose();
  }

 private:
  std::string name_;
  std::size_t dim_ = 1;
  double horizon_ = 1.0;
  ModelConstants constants_;
  nlohmann::json doc_;
  std::string signature_;
  std::vector<Program> drift_;
  std::vector<Program> sigma_;  // 1 entry when scalar, else dim*dim
  std::vector<Functional> drift_fs_, diffusion_fs_;
  bool scalar_ = true;
  bool sigma_space_free_ = true;
  bool drift_zero_ = false;
};

/// Memoized functional values along a flow. Values are cached per node
/// when the integrands are time free and no matching track exists.
/// Not thread safe.
class FlowFunctionals {
 public:
  enum class Part { drift, diffusion };
  FlowFunctionals(const Model& model, const Flow& flow, Part part);
  const std::vector<double>& at(double t);
  std::size_t size() const noexcept { return count_; }

 private:
  const Model& model_;
  const Flow& flow_;
  Part part_;
  std::size_t count_;
  bool per_node_;
  std::vector<std::vector<double>> node_cache_;
  std::vector<char> node_ready_;
  std::vector<double> scratch_;
};

}  // namespace mvsde
