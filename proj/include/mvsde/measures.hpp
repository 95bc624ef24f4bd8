#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mvsde {

/// Weighted particle ensemble on R^d. Coordinates are stored row-major,
/// one row of `dim` values per atom. Weights are normalized on construction.
class Measure {
 public:
  Measure() = default;
  Measure(std::size_t dim, std::vector<double> coords, std::vector<double> weights);
  /// Equal-weight ensemble.
  Measure(std::size_t dim, std::vector<double> coords);

  static Measure dirac(std::span<const double> x);
  static Measure dirac1(double x) { return dirac(std::span<const double>(&x, 1)); }
  /// 1D convenience: atoms with optional weights (equal if empty).
  static Measure atoms1(std::vector<double> xs, std::vector<double> ws = {});

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return weights_.size(); }
  std::span<const double> point(std::size_t i) const {
    return {coords_.data() + i * dim_, dim_};
  }
  double weight(std::size_t i) const { return weights_[i]; }
  const std::vector<double>& coords() const noexcept { return coords_; }
  const std::vector<double>& weights() const noexcept { return weights_; }

  double mean(std::size_t axis = 0) const;
  double variance(std::size_t axis = 0) const;

 private:
  std::size_t dim_ = 0;
  std::vector<double> coords_;
  std::vector<double> weights_;
};

/// Grid density in 1D or 2D; values at cell centers, row-major with axis 0
/// varying slowest.
struct Density {
  std::size_t dim = 1;
  std::vector<double> lo, hi;
  std::vector<std::size_t> shape;
  std::vector<double> values;
  bool normalized = false;
  bool coverage_warning = false;

  double cell_width(std::size_t axis) const { return (hi[axis] - lo[axis]) / shape[axis]; }
  double cell_volume() const;
  double center(std::size_t axis, std::size_t i) const {
    return lo[axis] + (i + 0.5) * cell_width(axis);
  }
  double mass() const;
  bool same_grid(const Density& o) const;
};

struct GridSpec {
  std::vector<double> lo, hi;
  std::vector<std::size_t> shape;
};

/// Time-indexed path of measures. Between nodes the flow is piecewise
/// constant (left endpoint); a single-node flow is constant in time.
struct FunctionalTrack;

class Flow {
 public:
  Flow() = default;
  Flow(std::vector<double> times, std::vector<Measure> measures);
  static Flow constant(const Measure& m, std::vector<double> times);

  const std::vector<double>& times() const noexcept { return times_; }
  const std::vector<Measure>& measures() const noexcept { return measures_; }
  std::size_t size() const noexcept { return times_.size(); }
  std::size_t dim() const { return measures_.front().dim(); }
  const Measure& at_node(std::size_t i) const { return measures_[i]; }

  /// Index of the node in force at time t. Throws DomainError outside the
  /// covered interval (unless the flow has a single node).
  std::size_t node_index(double t) const;
  const Measure& at(double t) const { return measures_[node_index(t)]; }
  bool covers(double s, double t) const;

  /// Optional per-step functional values recorded by the simulator. Used
  /// when the flow is fed back into a model with matching signature.
  std::shared_ptr<const FunctionalTrack> track;

 private:
  std::vector<double> times_;
  std::vector<Measure> measures_;
};

/// Per-simulation-step values of a model's integral functionals.
struct FunctionalTrack {
  std::string signature;
  std::vector<double> step_times;  // left endpoints, increasing
  std::vector<std::vector<double>> drift_values;
  std::vector<std::vector<double>> diffusion_values;
  /// Index of the step in force at t, or npos when t lies outside.
  std::size_t lookup(double t) const;
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

/// (Σ w|x|^k)^{1/k} for k ≥ 1, Σ w|x|^k for 0 < k < 1, and 1 for k = 0.
double moment_k(const Measure& m, double k);

/// Σ w_i f(x_i). Throws NumericError on a non-finite value.
double integrate(const Measure& m, const std::function<double(std::span<const double>)>& f);

/// Systematic resampling to n equal-weight atoms.
Measure resample(const Measure& m, std::size_t n, std::uint64_t seed);

/// Silverman's rule 1.06 σ n^{-1/5} along axis 0 (pooled over axes in 2D).
double silverman_bandwidth(const Measure& m);

/// Grid covering the particle range ± 4 bandwidths with `cells` per axis.
GridSpec auto_grid(const Measure& m, double bandwidth, std::size_t cells);
GridSpec auto_grid(const Measure& a, const Measure& b, double bandwidth, std::size_t cells);

/// Gaussian KDE at cell centers, renormalized to unit mass. Sets
/// `coverage_warning` when range ± 4 bandwidths leaves the grid.
Density to_density(const Measure& m, const GridSpec& grid, double bandwidth);
/// Bandwidth by Silverman's rule, grid by auto_grid with 512 (1D) or 128 (2D) cells.
Density to_density(const Measure& m);

/// Atoms at cell centers with weight value·cell_volume.
Measure grid_measure(const Density& d, double min_mass = 0.0);

void write_measure_csv(std::ostream& os, const Measure& m);
Measure read_measure_csv(std::istream& is);
void write_density_csv(std::ostream& os, const Density& d);
Density read_density_csv(std::istream& is);

}  // namespace mvsde
