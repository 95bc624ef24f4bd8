#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvsde/measures.hpp"

namespace mvsde {

/// Compiled composition expression. JSON node schema:
///
///   {"op": "constant", "value": c}
///   {"op": "time"}
///   {"op": "coord", "index": i}          x_i, or y_i inside an integral
///   {"op": "norm"}                       |x| (|y| inside an integral)
///   {"op": "tanh" | "arctan" | "clamp1", "arg": node}
///   {"op": "linear", "terms": [{"coef": c, "expr": node}, ...], "offset": c}
///   {"op": "product", "args": [node, ...]}
///   {"op": "integral", "expr": node, "name": "..."}   μ(ψ), not nestable
///
/// clamp1 clips to [-1, 1].
class Program {
 public:
  enum class Op : unsigned char { konst, time, coord, norm, slot, tanh, atan, clamp1, scale, add, mul };
  struct Instr {
    Op op;
    std::size_t n = 0;  // coord index, slot index, or arity
    double c = 0.0;
  };

  double eval(double t, std::span<const double> x, std::span<const double> slots) const;
  bool uses_space() const noexcept { return uses_space_; }
  bool uses_slots() const noexcept { return uses_slots_; }
  bool uses_time() const noexcept { return uses_time_; }
  std::size_t max_coord() const noexcept { return max_coord_; }

 private:
  friend class ExprCompiler;
  std::vector<Instr> code_;
  bool uses_space_ = false;
  bool uses_slots_ = false;
  bool uses_time_ = false;
  std::size_t max_coord_ = 0;
};

/// One integral functional μ(ψ).
struct Functional {
  std::string name;
  Program integrand;
};

/// Compiles expressions into programs while collecting integral
/// functionals into a shared slot table.
class ExprCompiler {
 public:
  /// `pointer` locates `node` in the source document for error messages.
  Program compile(const nlohmann::json& node, const std::string& pointer);
  const std::vector<Functional>& functionals() const noexcept { return functionals_; }
  std::vector<Functional> take_functionals() { return std::move(functionals_); }

 private:
  void emit(const nlohmann::json& node, const std::string& pointer, Program& p, bool in_integral);
  std::vector<Functional> functionals_;
};

/// Values μ(ψ_j) for every functional, summed in fixed blocks so the
/// result does not depend on thread count.
std::vector<double> eval_functionals(const std::vector<Functional>& fs, double t, const Measure& m);
/// Same over raw row-major coordinates with normalized weights.
std::vector<double> eval_functionals(const std::vector<Functional>& fs, double t, std::size_t dim,
                                     std::span<const double> coords, std::span<const double> weights);

}  // namespace mvsde
