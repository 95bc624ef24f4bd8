#include "mvsde/experiment_config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "mvsde/errors.hpp"
#include "mvsde/stats.hpp"

namespace mvsde {

namespace {

using nlohmann::json;

const std::pair<ExperimentKind, const char*> kKinds[] = {
    {ExperimentKind::regularity, "regularity"}, {ExperimentKind::gradient, "gradient"},
    {ExperimentKind::stability, "stability"},   {ExperimentKind::duhamel, "duhamel"},
    {ExperimentKind::solve, "solve"},           {ExperimentKind::audit, "audit"}};

std::string child(const std::string& ptr, const std::string& key) { return ptr + "/" + key; }
std::string child(const std::string& ptr, std::size_t i) { return ptr + "/" + std::to_string(i); }

void reject_unknown(const json& obj, const std::string& ptr, const std::set<std::string>& known) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!known.count(it.key())) throw ParseError(child(ptr, it.key()), "unknown field '" + it.key() + "'");
}

double number(const json& v, const std::string& ptr) {
  if (!v.is_number()) throw ParseError(ptr, "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw ParseError(ptr, "expected a finite number");
  return x;
}

double positive(const json& v, const std::string& ptr) {
  const double x = number(v, ptr);
  if (!(x > 0)) throw ParseError(ptr, "expected a positive number");
  return x;
}

std::size_t count(const json& v, const std::string& ptr) {
  if (!v.is_number_integer() && !v.is_number_unsigned()) throw ParseError(ptr, "expected a positive integer");
  const auto x = v.get<long long>();
  if (x < 1) throw ParseError(ptr, "expected a positive integer");
  return static_cast<std::size_t>(x);
}

std::vector<double> numbers(const json& v, const std::string& ptr, bool allow_empty = false) {
  if (!v.is_array()) throw ParseError(ptr, "expected an array of numbers");
  if (v.empty() && !allow_empty) throw ParseError(ptr, "expected a non-empty array");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(number(v[i], child(ptr, i)));
  return out;
}

std::vector<double> ascending(const json& v, const std::string& ptr, double lo, double hi) {
  std::vector<double> out = numbers(v, ptr);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(out[i] > lo && out[i] <= hi))
      throw ParseError(child(ptr, i), "expected a value in (" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    if (i > 0 && !(out[i] > out[i - 1])) throw ParseError(child(ptr, i), "values must be strictly increasing");
  }
  return out;
}

MeasureSpec measure_spec(const json& v, const std::string& ptr, std::size_t dim) {
  if (!v.is_object()) throw ParseError(ptr, "expected a measure object");
  if (!v.contains("kind") || !v["kind"].is_string()) throw ParseError(child(ptr, "kind"), "missing measure kind");
  MeasureSpec s;
  s.kind = v["kind"].get<std::string>();
  auto need = [&](const char* key) -> const json& {
    if (!v.contains(key)) throw ParseError(child(ptr, key), std::string("missing field '") + key + "'");
    return v[key];
  };
  auto point_of = [&](const json& p, const std::string& pp) {
    std::vector<double> x = numbers(p, pp);
    if (x.size() != dim) throw ParseError(pp, "expected " + std::to_string(dim) + " coordinates");
    return x;
  };
  if (s.kind == "dirac") {
    reject_unknown(v, ptr, {"kind", "point"});
    s.point = point_of(need("point"), child(ptr, "point"));
  } else if (s.kind == "normal") {
    reject_unknown(v, ptr, {"kind", "mean", "sd", "atoms"});
    if (dim != 1) throw ParseError(child(ptr, "kind"), "normal initial laws are 1D only");
    s.point = point_of(need("mean"), child(ptr, "mean"));
    s.sd = positive(need("sd"), child(ptr, "sd"));
    s.atoms = count(need("atoms"), child(ptr, "atoms"));
  } else if (s.kind == "atoms") {
    reject_unknown(v, ptr, {"kind", "points", "weights"});
    const json& pts = need("points");
    const std::string pp = child(ptr, "points");
    if (!pts.is_array() || pts.empty()) throw ParseError(pp, "expected a non-empty array of points");
    for (std::size_t i = 0; i < pts.size(); ++i) s.points.push_back(point_of(pts[i], child(pp, i)));
    if (v.contains("weights")) {
      s.weights = numbers(v["weights"], child(ptr, "weights"));
      if (s.weights.size() != s.points.size())
        throw ParseError(child(ptr, "weights"), "expected one weight per point");
      for (std::size_t i = 0; i < s.weights.size(); ++i)
        if (!(s.weights[i] > 0)) throw ParseError(child(child(ptr, "weights"), i), "weights must be positive");
    }
  } else {
    throw ParseError(child(ptr, "kind"), "unknown measure kind '" + s.kind + "'");
  }
  return s;
}

ExperimentParams params_from(const json& v, const std::string& ptr, double horizon) {
  ExperimentParams p;
  if (!v.is_object()) throw ParseError(ptr, "expected an object");
  reject_unknown(v, ptr,
                 {"tol", "slope_min", "slope_max", "fit_span", "wk_ratio_spread", "epsilons", "slope_tolerance",
                  "deltas", "drivers", "linear_tolerance", "horizons", "cells", "tv_tolerance", "closed_form",
                  "audit_samples", "flow_check"});
  auto at = [&](const char* key) { return child(ptr, key); };
  if (v.contains("tol")) p.tol = positive(v["tol"], at("tol"));
  if (v.contains("slope_min")) p.slope_min = number(v["slope_min"], at("slope_min"));
  if (v.contains("slope_max")) p.slope_max = number(v["slope_max"], at("slope_max"));
  if (!(p.slope_min < p.slope_max)) throw ParseError(at("slope_max"), "slope_max must exceed slope_min");
  if (v.contains("fit_span")) p.fit_span = positive(v["fit_span"], at("fit_span"));
  if (p.fit_span <= 1) throw ParseError(at("fit_span"), "fit_span must exceed 1");
  if (v.contains("wk_ratio_spread")) p.wk_ratio_spread = positive(v["wk_ratio_spread"], at("wk_ratio_spread"));
  if (v.contains("epsilons")) p.epsilons = ascending(v["epsilons"], at("epsilons"), 0.0, 1.0);
  if (v.contains("slope_tolerance")) p.slope_tolerance = positive(v["slope_tolerance"], at("slope_tolerance"));
  if (v.contains("deltas")) p.deltas = ascending(v["deltas"], at("deltas"), 0.0, 1e300);
  if (v.contains("drivers")) {
    const json& d = v["drivers"];
    if (!d.is_array() || d.empty()) throw ParseError(at("drivers"), "expected a non-empty array of driver names");
    p.drivers.clear();
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (!d[i].is_string()) throw ParseError(child(at("drivers"), i), "expected a driver name");
      const std::string name = d[i].get<std::string>();
      if (name != "initial" && name != "diffusion" && name != "drift")
        throw ParseError(child(at("drivers"), i), "driver must be initial, diffusion or drift");
      p.drivers.push_back(name);
    }
  }
  if (v.contains("linear_tolerance")) p.linear_tolerance = positive(v["linear_tolerance"], at("linear_tolerance"));
  if (v.contains("horizons")) p.horizons = ascending(v["horizons"], at("horizons"), 0.0, horizon);
  if (v.contains("cells")) p.cells = count(v["cells"], at("cells"));
  if (v.contains("tv_tolerance")) p.tv_tolerance = positive(v["tv_tolerance"], at("tv_tolerance"));
  if (v.contains("closed_form")) {
    const json& c = v["closed_form"];
    const std::string cp = at("closed_form");
    if (!c.is_object()) throw ParseError(cp, "expected an object");
    reject_unknown(c, cp, {"drift", "diffusion"});
    ClosedForm f;
    if (c.contains("drift")) f.drift = number(c["drift"], child(cp, "drift"));
    if (c.contains("diffusion")) f.diffusion = positive(c["diffusion"], child(cp, "diffusion"));
    p.closed_form = f;
  }
  if (v.contains("audit_samples")) p.audit_samples = count(v["audit_samples"], at("audit_samples"));
  if (v.contains("flow_check")) {
    if (!v["flow_check"].is_boolean()) throw ParseError(at("flow_check"), "expected true or false");
    p.flow_check = v["flow_check"].get<bool>();
  }
  return p;
}

}  // namespace

std::string to_string(ExperimentKind k) {
  for (const auto& [kind, name] : kKinds)
    if (kind == k) return name;
  return "unknown";
}

ExperimentKind parse_kind(const std::string& name, const std::string& pointer) {
  for (const auto& [kind, n] : kKinds)
    if (name == n) return kind;
  throw ParseError(pointer, "unknown experiment kind '" + name + "'");
}

Measure make_measure(const MeasureSpec& s) {
  if (s.kind == "dirac") return Measure::dirac(s.point);
  if (s.kind == "normal") {
    std::vector<double> xs(s.atoms);
    for (std::size_t i = 0; i < s.atoms; ++i) {
      const double u = (i + 0.5) / s.atoms;
      double lo = -12, hi = 12;
      for (int it = 0; it < 90; ++it) {
        const double m = 0.5 * (lo + hi);
        (normal_cdf(m) < u ? lo : hi) = m;
      }
      xs[i] = s.point[0] + s.sd * 0.5 * (lo + hi);
    }
    return Measure::atoms1(std::move(xs));
  }
  if (s.kind == "atoms") {
    const std::size_t dim = s.points.front().size();
    std::vector<double> coords;
    for (const auto& p : s.points) coords.insert(coords.end(), p.begin(), p.end());
    if (s.weights.empty()) return Measure(dim, std::move(coords));
    return Measure(dim, std::move(coords), s.weights);
  }
  throw DomainError("unknown measure kind " + s.kind);
}

nlohmann::json to_json(const MeasureSpec& s) {
  if (s.kind == "dirac") return {{"kind", s.kind}, {"point", s.point}};
  if (s.kind == "normal") return {{"kind", s.kind}, {"mean", s.point}, {"sd", s.sd}, {"atoms", s.atoms}};
  json j{{"kind", s.kind}, {"points", s.points}};
  if (!s.weights.empty()) j["weights"] = s.weights;
  return j;
}

ExperimentConfig config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir) {
  if (!doc.is_object()) throw ParseError("", "config must be an object");
  reject_unknown(doc, "", {"model", "kind", "gamma1", "gamma2", "times", "sim", "out", "params"});
  ExperimentConfig c;
  if (!doc.contains("model") || !doc["model"].is_string() || doc["model"].get<std::string>().empty())
    throw ParseError("/model", "missing model path");
  c.model_ref = doc["model"].get<std::string>();
  c.model_path = std::filesystem::path(c.model_ref).is_absolute() ? std::filesystem::path(c.model_ref)
                                                                   : base_dir / c.model_ref;
  Model model;
  try {
    model = Model::load(c.model_path);
  } catch (const ParseError& e) {
    throw ParseError("/model", "model file " + c.model_path.string() + " is invalid (" + e.what() + ")");
  }
  if (!doc.contains("kind") || !doc["kind"].is_string()) throw ParseError("/kind", "missing experiment kind");
  c.kind = parse_kind(doc["kind"].get<std::string>());

  if (!doc.contains("gamma1")) throw ParseError("/gamma1", "missing initial law");
  c.gamma1 = measure_spec(doc["gamma1"], "/gamma1", model.dim());
  if (doc.contains("gamma2")) c.gamma2 = measure_spec(doc["gamma2"], "/gamma2", model.dim());
  if (!doc.contains("times")) throw ParseError("/times", "missing time points");
  c.times = ascending(doc["times"], "/times", 0.0, model.horizon());

  if (doc.contains("sim")) {
    const json& s = doc["sim"];
    if (!s.is_object()) throw ParseError("/sim", "expected an object");
    reject_unknown(s, "/sim", {"particles", "dt", "seed"});
    if (s.contains("particles")) c.sim.n_particles = count(s["particles"], "/sim/particles");
    if (s.contains("dt")) c.sim.dt = positive(s["dt"], "/sim/dt");
    if (s.contains("seed")) {
      if (!s["seed"].is_number_unsigned() && !s["seed"].is_number_integer())
        throw ParseError("/sim/seed", "expected a nonnegative integer");
      if (s["seed"].is_number_integer() && s["seed"].get<long long>() < 0)
        throw ParseError("/sim/seed", "expected a nonnegative integer");
      c.sim.seed = s["seed"].get<std::uint64_t>();
    }
  }
  c.sim.t0 = 0.0;
  c.sim.t1 = c.times.back();
  c.sim.crn = true;
  if (doc.contains("out")) {
    if (!doc["out"].is_string()) throw ParseError("/out", "expected a directory name");
    c.out = doc["out"].get<std::string>();
  }
  if (doc.contains("params")) c.params = params_from(doc["params"], "/params", model.horizon());

  const bool two = c.kind == ExperimentKind::regularity || c.kind == ExperimentKind::gradient;
  if (two && !c.gamma2) throw ParseError("/gamma2", "this experiment compares two initial laws");
  if (c.kind == ExperimentKind::gradient) {
    if (!c.gamma1.is_dirac()) throw ParseError("/gamma1/kind", "gradient runs start from Diracs");
    if (!c.gamma2->is_dirac()) throw ParseError("/gamma2/kind", "gradient runs start from Diracs");
  }
  if (c.kind == ExperimentKind::duhamel) {
    if (model.dim() != 1) throw ParseError("/model", "Duhamel validation needs a 1D model");
    if (!c.gamma1.is_dirac()) throw ParseError("/gamma1/kind", "Duhamel validation starts from a Dirac");
    if (c.params.horizons.back() > c.times.back())
      throw ParseError("/params/horizons", "horizons must not exceed the last time point");
  }
  return c;
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("", "cannot open config file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("", std::string("malformed JSON: ") + e.what());
  }
  return config_from_json(doc, path.parent_path());
}

nlohmann::json to_json(const ExperimentConfig& c) {
  const ExperimentParams& p = c.params;
  json params{{"tol", p.tol},
              {"slope_min", p.slope_min},
              {"slope_max", p.slope_max},
              {"fit_span", p.fit_span},
              {"wk_ratio_spread", p.wk_ratio_spread},
              {"epsilons", p.epsilons},
              {"slope_tolerance", p.slope_tolerance},
              {"deltas", p.deltas},
              {"drivers", p.drivers},
              {"linear_tolerance", p.linear_tolerance},
              {"horizons", p.horizons},
              {"cells", p.cells},
              {"tv_tolerance", p.tv_tolerance},
              {"audit_samples", p.audit_samples},
              {"flow_check", p.flow_check}};
  if (p.closed_form) params["closed_form"] = {{"drift", p.closed_form->drift}, {"diffusion", p.closed_form->diffusion}};
  json j{{"model", c.model_ref},
         {"kind", to_string(c.kind)},
         {"gamma1", to_json(c.gamma1)},
         {"times", c.times},
         {"sim", {{"particles", c.sim.n_particles}, {"dt", c.sim.dt}, {"seed", c.sim.seed}}},
         {"params", params}};
  if (c.gamma2) j["gamma2"] = to_json(*c.gamma2);
  if (!c.out.empty()) j["out"] = c.out;
  return j;
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  return a.model_path == b.model_path && to_json(a) == to_json(b);
}

void apply_overrides(ExperimentConfig& c, const RunOverrides& o) {
  if (o.smoke) c.sim.n_particles = 1000;
  if (o.particles) c.sim.n_particles = *o.particles;
  if (o.seed) c.sim.seed = *o.seed;
}

}  // namespace mvsde
