#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvsde/coefficients.hpp"
#include "mvsde/measures.hpp"
#include "mvsde/sde_engine.hpp"

namespace mvsde {

enum class ExperimentKind { regularity, gradient, stability, duhamel, solve, audit };

std::string to_string(ExperimentKind k);
/// Throws ParseError at `pointer` for unknown names.
ExperimentKind parse_kind(const std::string& name, const std::string& pointer = "/kind");

/// Initial law. JSON forms:
///   {"kind": "dirac",  "point": [x...]}
///   {"kind": "normal", "mean": [m...], "sd": s, "atoms": n}   (quantile atoms per axis, 1D only)
///   {"kind": "atoms",  "points": [[x...], ...], "weights": [w...]}
struct MeasureSpec {
  std::string kind = "dirac";
  std::vector<double> point;  // dirac point or normal mean
  double sd = 0.0;
  std::size_t atoms = 0;
  std::vector<std::vector<double>> points;
  std::vector<double> weights;

  bool is_dirac() const { return kind == "dirac"; }
};

Measure make_measure(const MeasureSpec& s);
nlohmann::json to_json(const MeasureSpec& s);

/// Constant-coefficient oracle of the Duhamel run: the law at t is
/// N(x0 + drift t, diffusion² t).
struct ClosedForm {
  double drift = 0.0;
  double diffusion = 1.0;
  bool operator==(const ClosedForm&) const = default;
};

/// Kind-specific knobs. Every field has a default and appears in the
/// serialized form.
struct ExperimentParams {
  double tol = 1e-4;                // fixed-point tolerance
  double slope_min = -0.65;         // regularity TV slope band
  double slope_max = -0.35;
  double fit_span = 100.0;          // regularity fit window [t_min, fit_span t_min]
  double wk_ratio_spread = 2.0;     // max/min of the W_k ratio across t
  std::vector<double> epsilons{0.25, 0.5, 1.0};
  double slope_tolerance = 0.15;    // gradient exponent laws
  std::vector<double> deltas{1e-3, 3e-3, 1e-2, 3e-2, 1e-1};
  std::vector<std::string> drivers{"initial", "diffusion", "drift"};
  double linear_tolerance = 0.2;    // stability slope 1 ± this
  std::vector<double> horizons{0.1, 0.25, 0.5};
  std::size_t cells = 1024;
  double tv_tolerance = 0.05;
  std::optional<ClosedForm> closed_form;
  std::size_t audit_samples = 2000;
  bool flow_check = false;
  bool operator==(const ExperimentParams&) const = default;
};

struct ExperimentConfig {
  std::string model_ref;               // as written in the file
  std::filesystem::path model_path;    // resolved against the config directory
  ExperimentKind kind = ExperimentKind::solve;
  MeasureSpec gamma1;
  std::optional<MeasureSpec> gamma2;
  std::vector<double> times;
  SimConfig sim;
  std::string out;                     // optional default output directory
  ExperimentParams params;
};

/// Validates against the model's horizon (times strictly increasing in
/// (0, T]). The model file must parse. Errors carry the JSON pointer of the
/// offending field.
ExperimentConfig config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);
ExperimentConfig parse_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& c);
bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

/// CLI overrides. Smoke mode uses 10³ particles.
struct RunOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> particles;
  bool smoke = false;
};
void apply_overrides(ExperimentConfig& c, const RunOverrides& o);

}  // namespace mvsde
