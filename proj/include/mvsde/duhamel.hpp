#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <vector>

#include <json.hpp>

#include "mvsde/coefficients.hpp"
#include "mvsde/measures.hpp"

namespace mvsde {

struct DuhamelOptions {
  std::size_t cells = 1024;
  double cell_width = 0.0;      // 0: cells span b_sup(t−s) + 8√(K(t−s)) around x0
  std::size_t time_nodes = 24;  // table rows after the initial one
  std::size_t gauss = 4;        // Gauss points per time interval
  double tol = 1e-8;            // sup-norm Picard stopping threshold
  std::size_t max_iterations = 50;
  bool gauss_seidel = false;    // reuse rows updated earlier in the same sweep
  std::size_t cov_table = 4096; // resolution of the cumulative covariance table
};

/// Density table p_{s,T_j}(x0, ·) on a 1D grid. Table times are graded
/// toward s: T_j = s + (t−s)(j/J)². Row 0 is the Dirac mass at x0.
struct DuhamelGrid {
  double s = 0.0, t = 0.0, x0 = 0.0;
  double lo = 0.0, h = 0.0;
  std::size_t cells = 0;
  std::vector<double> times;
  std::vector<std::vector<double>> p;
  std::size_t iterations = 0;
  std::vector<double> residuals;
  double clamp_magnitude = 0.0;     // largest negative value removed
  double max_mass_deviation = 0.0;  // over rows 1..J
  std::vector<double> masses;
  DuhamelOptions options;

  double center(std::size_t i) const { return lo + (i + 0.5) * h; }
  double hi() const { return lo + cells * h; }
  Density density(std::size_t row) const;
  Density final_density() const { return density(p.size() - 1); }
  /// Row index of a table time (DomainError when t is not a node).
  std::size_t row_of(double time) const;
};

/// Picard iteration p ← q + Duhamel[p] on the grid. d = 1.
/// Throws ConvergenceError after max_iterations, DomainError when t − s
/// is below 4h²/K.
DuhamelGrid solve_density(const Model& model, const Flow& mu_flow, const Flow& nu_flow, double x0, double s,
                          double t, const DuhamelOptions& opt = {});

/// ∫ f(z) [drift term + trace term](z) dz at table time t, by space-time
/// quadrature against the table. AccuracyError when the Gauss-refinement
/// estimate exceeds tol·max(1, |R|).
double remainder_R(const Model& model, const Flow& mu_flow, const Flow& nu_flow, const DuhamelGrid& grid,
                   const std::function<double(double)>& f, double s, double t, double tol = 1e-6);

/// Drift term only. Requires a diffusion free of the space variable.
double remainder_drift_only(const Model& model, const Flow& mu_flow, const Flow& nu_flow,
                            const DuhamelGrid& grid, const std::function<double(double)>& f, double s,
                            double t, double tol = 1e-6);

/// ‖p_row − law(samples)‖_var with both sides smoothed by the same
/// Gaussian kernel on the table grid. bandwidth 0: Silverman on the samples.
double variation_against_samples(const DuhamelGrid& g, std::size_t row, const Measure& samples,
                                 double bandwidth = 0.0);

/// Rows 1..J as (t, x, p).
void write_table_csv(const DuhamelGrid& g, const std::filesystem::path& path);
/// Picard history as (iter, residual).
void write_residuals_csv(const DuhamelGrid& g, const std::filesystem::path& path);

nlohmann::json summary_json(const DuhamelGrid& g);

}  // namespace mvsde
