#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace mvsde {

struct PlanEntry {
  std::size_t i, j;
  double mass;
};

struct TransportSolution {
  double primal = 0.0;  // Σ plan·cost
  double dual = 0.0;    // Σ a·u + Σ b·v
  double min_reduced_cost = 0.0;
  std::vector<double> u, v;
  std::vector<PlanEntry> plan;
  std::size_t pivots = 0;
};

/// Balanced transportation problem by the primal transportation simplex
/// (northwest-corner start, MODI potentials). `cost` is row-major n×m.
/// Supplies and demands must each sum to the same total.
TransportSolution solve_transport(std::span<const double> supply, std::span<const double> demand,
                                  std::span<const double> cost);

}  // namespace mvsde
