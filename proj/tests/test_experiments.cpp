#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mvsde/errors.hpp"
#include "mvsde/experiments.hpp"
#include "mvsde/stats.hpp"

using namespace mvsde;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs = fs::path(MVSDE_SOURCE_DIR) / "configs" / "experiments";

json minimal() {
  return {{"model", "../models/brownian.json"},
          {"kind", "solve"},
          {"gamma1", {{"kind", "dirac"}, {"point", {0.0}}}},
          {"times", {0.5, 1.0}}};
}

std::string pointer_of(const json& doc) {
  try {
    config_from_json(doc, kConfigs);
  } catch (const ParseError& e) {
    return e.pointer();
  }
  return "<accepted>";
}

ExperimentConfig small(json doc, std::size_t n = 2000) {
  ExperimentConfig c = config_from_json(doc, kConfigs);
  c.sim.n_particles = n;
  return c;
}

const Check& check(const Report& r, const std::string& name) {
  for (const Check& c : r.checks)
    if (c.name == name) return c;
  FAIL("missing check " << name);
  throw 0;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("config round trip") {
  const ExperimentConfig a = config_from_json(minimal(), kConfigs);
  CHECK(a.kind == ExperimentKind::solve);
  CHECK(a.sim.t1 == 1.0);
  CHECK(a.sim.crn);
  const ExperimentConfig b = config_from_json(to_json(a), kConfigs);
  CHECK(a == b);
  CHECK(to_json(a) == to_json(b));

  json full = minimal();
  full["kind"] = "regularity";
  full["gamma2"] = {{"kind", "normal"}, {"mean", {0.2}}, {"sd", 0.5}, {"atoms", 50}};
  full["params"] = {{"closed_form", {{"drift", 1.0}}}, {"deltas", {0.01, 0.1}}, {"flow_check", true}};
  const ExperimentConfig c = config_from_json(full, kConfigs);
  CHECK(c == config_from_json(to_json(c), kConfigs));
  REQUIRE(c.params.closed_form);
  CHECK(c.params.closed_form->diffusion == 1.0);
}

TEST_CASE("config errors name the offending field") {
  json d = minimal();
  d.erase("model");
  CHECK(pointer_of(d) == "/model");
  d = minimal();
  d["model"] = "../models/missing.json";
  CHECK(pointer_of(d) == "/model");
  d = minimal();
  d["kind"] = "bogus";
  CHECK(pointer_of(d) == "/kind");
  d = minimal();
  d["times"] = {0.5, 0.5};
  CHECK(pointer_of(d) == "/times/1");
  d = minimal();
  d["times"] = {0.5, 2.0};  // beyond the horizon
  CHECK(pointer_of(d) == "/times/1");
  d = minimal();
  d["times"] = {0.0, 1.0};
  CHECK(pointer_of(d) == "/times/0");
  d = minimal();
  d["sim"] = {{"particles", 0}};
  CHECK(pointer_of(d) == "/sim/particles");
  d = minimal();
  d["sim"] = {{"dt", -1.0}};
  CHECK(pointer_of(d) == "/sim/dt");
  d = minimal();
  d["params"] = {{"colour", 1}};
  CHECK(pointer_of(d) == "/params/colour");
  d = minimal();
  d["gamma1"] = {{"kind", "dirac"}, {"point", {0.0, 1.0}}};
  CHECK(pointer_of(d) == "/gamma1/point");
  d = minimal();
  d["params"] = {{"drivers", {"initial", "noise"}}};
  CHECK(pointer_of(d) == "/params/drivers/1");
  d = minimal();
  d["kind"] = "regularity";
  CHECK(pointer_of(d) == "/gamma2");
  d["kind"] = "gradient";
  d["gamma2"] = {{"kind", "normal"}, {"mean", {0.0}}, {"sd", 1.0}, {"atoms", 10}};
  CHECK(pointer_of(d) == "/gamma2/kind");
  d = minimal();
  d["kind"] = "duhamel";
  d["params"] = {{"horizons", {0.5, 1.5}}};
  CHECK(pointer_of(d) == "/params/horizons/1");
  d = minimal();
  d["model"] = "../models/brownian2d.json";
  d["gamma1"]["point"] = {0.0, 0.0};
  d["kind"] = "duhamel";
  CHECK(pointer_of(d) == "/model");

  const fs::path bad = fs::temp_directory_path() / "mvsde_bad_config.json";
  std::ofstream(bad) << "{\"model\": ";
  try {
    parse_config(bad);
    FAIL("malformed file accepted");
  } catch (const ParseError& e) {
    CHECK(e.pointer().empty());
  }
}

TEST_CASE("shipped configs parse") {
  std::size_t n = 0;
  for (const auto& entry : fs::directory_iterator(kConfigs)) {
    if (entry.path().extension() != ".json") continue;
    CAPTURE(entry.path().string());
    const ExperimentConfig c = parse_config(entry.path());
    CHECK(c == config_from_json(to_json(c), kConfigs));
    CHECK_FALSE(c.out.empty());
    ++n;
  }
  CHECK(n >= 8);
}

TEST_CASE("overrides") {
  ExperimentConfig c = config_from_json(minimal(), kConfigs);
  apply_overrides(c, {.seed = 99, .particles = std::nullopt, .smoke = true});
  CHECK(c.sim.n_particles == 1000);
  CHECK(c.sim.seed == 99);
  apply_overrides(c, {.seed = std::nullopt, .particles = 123, .smoke = true});
  CHECK(c.sim.n_particles == 123);
}

TEST_CASE("measure specs and helpers") {
  MeasureSpec s;
  s.kind = "normal";
  s.point = {1.0};
  s.sd = 2.0;
  s.atoms = 4000;
  const Measure m = make_measure(s);
  CHECK(m.size() == 4000);
  CHECK(m.mean() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(m.variance() == doctest::Approx(4.0).epsilon(2e-3));

  const Measure sh = shift_measure(Measure::atoms1({0.0, 1.0}, {0.25, 0.75}), 0.5);
  CHECK(sh.coords() == std::vector<double>{0.5, 1.5});
  CHECK(sh.weights() == std::vector<double>{0.25, 0.75});
  const Flow f = shift_flow(Flow::constant(Measure::dirac1(1.0), {0.0, 1.0}), -1.0);
  CHECK(f.at_node(1).mean() == 0.0);

  CHECK(time_integral({0.0, 1.0, 3.0}, {1.0, 1.0, 1.0}) == doctest::Approx(3.0));
  CHECK(time_integral({0.0, 2.0}, {0.0, 2.0}) == doctest::Approx(2.0));
}

TEST_CASE("report emission") {
  for (double x : {0.1, 1.0 / 3.0, -2.5e-300, 12345.0}) CHECK(std::stod(format_number(x)) == x);
  CHECK(format_number(HUGE_VAL) == "inf");

  Report r;
  r.kind = "solve";
  r.checks.push_back(make_check("a", 0.5, 0, 1));
  r.checks.push_back(advisory_check("b", 5, 0, 1));
  CHECK(r.passed());
  r.series.push_back({"demo", {"t", "y"}, {{1, 2}, {2, 4}}, true, false});
  const fs::path dir = fs::temp_directory_path() / "mvsde_report_test";
  fs::remove_all(dir);
  emit_report(r, dir);
  CHECK(slurp(dir / "series_demo.csv") == "t,y\n1,2\n2,4\n");
  const std::string gp = slurp(dir / "plot_demo.gp");
  CHECK(gp.find("series_demo.csv") != std::string::npos);
  CHECK(gp.find("set logscale x") != std::string::npos);
  const json s = json::parse(slurp(dir / "summary.json"));
  CHECK(s["passed"] == true);
  CHECK(s["checks"].size() == 2);

  r.checks.push_back(make_check("c", 2, 0, 1));
  CHECK_FALSE(r.passed());
  r.series.push_back({"broken", {"t", "y"}, {{1}}, false, false});
  CHECK_THROWS_AS(emit_report(r, dir), DomainError);
}

TEST_CASE("regularity with identical initials skips the fit") {
  json d = minimal();
  d["kind"] = "regularity";
  d["gamma2"] = d["gamma1"];
  d["times"] = {0.01, 0.1};
  const Report r = run_regularity(small(d));
  CHECK(r.passed());
  CHECK(check(r, "identical_initials").value == 0.0);
  CHECK(r.summary["slope_fit"] == "skipped");
}

TEST_CASE("regularity brownian oracle") {
  json d = minimal();
  d["kind"] = "regularity";
  d["gamma2"] = {{"kind", "dirac"}, {"point", {0.01}}};
  d["times"] = {0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1};
  d["sim"] = {{"dt", 1e-4}};
  d["params"] = {{"slope_min", -0.55}, {"slope_max", -0.45}};
  const Report r = run_regularity(small(d, 20000));
  CHECK(check(r, "tv_slope").passed);
  CHECK(check(r, "wk_ratio_spread").value == doctest::Approx(1.0));
  // TV(t) = 2(2Φ(ε/(2√t)) − 1) for shifted normals
  const Series& s = r.series.front();
  for (const auto& row : s.rows) {
    const double t = row[0], exact = 2 * (2 * normal_cdf(0.01 / (2 * std::sqrt(t))) - 1);
    CHECK(row[1] == doctest::Approx(exact).epsilon(0.15));
  }
}

TEST_CASE("gradient runs") {
  json d = minimal();
  d["kind"] = "gradient";
  d["gamma2"] = d["gamma1"];
  d["times"] = {0.01, 0.1, 1.0};
  SUBCASE("x = y gives zero distances") {
    const Report r = run_gradient(small(d));
    CHECK(check(r, "identical_initials").value == 0.0);
  }
  SUBCASE("unresolvable separation is refused") {
    d["gamma2"]["point"] = {1e-12};
    CHECK_THROWS_AS(run_gradient(small(d)), DomainError);
  }
  SUBCASE("W_1 of coupled Brownian motions is the separation") {
    d["gamma2"]["point"] = {0.05};
    d["times"] = {0.001, 0.01, 0.03, 0.1, 0.3, 1.0};
    const Report r = run_gradient(small(d, 5000));
    for (const auto& row : r.series.front().rows) CHECK(row.back() == doctest::Approx(0.05).epsilon(1e-9));
    CHECK(check(r, "w_1_slope").passed);
  }
}

TEST_CASE("stability on brownian motion") {
  json d = minimal();
  d["kind"] = "stability";
  d["params"] = {{"deltas", {0.01, 0.1}}};
  const Report r = run_stability(small(d));
  CHECK(check(r, "unperturbed").value == 0.0);
  CHECK(check(r, "initial_slope").value == doctest::Approx(1.0));
  CHECK(r.summary["fits"]["drift"].is_string());
  CHECK(r.summary["fits"]["diffusion"].is_string());
  CHECK(r.passed());
}

TEST_CASE("duhamel validation against the closed form") {
  json d = minimal();
  d["model"] = "../models/constant_drift.json";
  d["kind"] = "duhamel";
  d["gamma1"]["point"] = {0.3};
  d["times"] = {0.2};
  d["params"] = {{"horizons", {0.1, 0.2}}, {"cells", 512}, {"closed_form", {{"drift", 1.0}}}, {"tv_tolerance", 0.2}};
  const Report r = run_duhamel_validation(small(d, 20000));
  CHECK(check(r, "tv_closed_form_0").value < 1e-3);
  CHECK(check(r, "tv_closed_form_1").value < 1e-3);
  CHECK(check(r, "tv_monte_carlo_1").value < 0.05);
  CHECK(r.series.size() == 4);
}

TEST_CASE("solve with flow property check") {
  json d = minimal();
  d["model"] = "../models/arctan_mean.json";
  d["gamma1"]["point"] = {1.0};
  d["sim"] = {{"dt", 1e-2}};
  d["params"] = {{"flow_check", true}, {"tol", 1e-4}};
  const Report r = run_solve(small(d, 4000));
  CHECK(check(r, "residual").passed);
  CHECK(check(r, "flow_property").passed);
  CHECK(r.summary["flow_check"]["s"] == 0.5);
}

TEST_CASE("audit run") {
  json d = minimal();
  d["kind"] = "audit";
  const Report r = run_audit(config_from_json(d, kConfigs));
  CHECK(r.passed());
  CHECK(r.summary["audit"]["passed"] == true);
  CHECK_FALSE(r.series.front().rows.empty());
}
