#include <doctest.h>

#include <cmath>
#include <numbers>

#include "mvsde/errors.hpp"
#include "mvsde/fixed_point.hpp"
#include "mvsde/stats.hpp"

using namespace mvsde;

namespace {

Model shipped(const std::string& name) {
  return Model::load(std::string(MVSDE_SOURCE_DIR) + "/configs/models/" + name + ".json");
}

SimConfig small(std::size_t n = 4000, double dt = 1e-2) {
  SimConfig c;
  c.n_particles = n;
  c.dt = dt;
  c.seed = 11;
  return c;
}

FlowDistances synthetic(std::vector<double> times, std::vector<double> first) {
  FlowDistances d;
  d.times = std::move(times);
  d.second.assign(first.size(), 0.0);
  d.first = std::move(first);
  return d;
}

/// E min(|X|, 1) for X ~ N(0, v).
double clamped_abs_mean(double v) {
  if (v <= 0) return 0.0;
  const double s = std::sqrt(v);
  return 2 * s / std::sqrt(2 * std::numbers::pi) * (1 - std::exp(-1 / (2 * v))) + 2 * (1 - normal_cdf(1 / s));
}

/// v' = (1 + tanh(E min(|X|,1)) / 2)², v(0) = 0, by RK4.
double tanh_variance(double t, int steps = 4000) {
  auto f = [](double v) {
    const double s = 1 + 0.5 * std::tanh(clamped_abs_mean(v));
    return s * s;
  };
  double v = 0;
  const double h = t / steps;
  for (int i = 0; i < steps; ++i) {
    const double k1 = f(v), k2 = f(v + 0.5 * h * k1), k3 = f(v + 0.5 * h * k2), k4 = f(v + h * k3);
    v += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  return v;
}

double arctan_mean(double m0, double t, int steps = 4000) {
  double m = m0;
  const double h = t / steps;
  for (int i = 0; i < steps; ++i) {
    const double k1 = std::atan(m), k2 = std::atan(m + 0.5 * h * k1), k3 = std::atan(m + 0.5 * h * k2),
                 k4 = std::atan(m + h * k3);
    m += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  return m;
}

bool same_flow(const Flow& a, const Flow& b) {
  if (a.times() != b.times()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a.at_node(i).coords() != b.at_node(i).coords() || a.at_node(i).weights() != b.at_node(i).weights())
      return false;
  return true;
}

}  // namespace

TEST_CASE("lambda thresholds") {
  ModelConstants c;  // beta = eta = 1
  const LambdaThresholds l = lambda_thresholds(c, 1.0);
  CHECK(l.l0 == doctest::Approx(4 * std::numbers::pi).epsilon(1e-12));
  CHECK(l.l1 == doctest::Approx(9.0 > l.l0 ? 9.0 : l.l0));
  CHECK(lambda_schedule(c, 1.0) == doctest::Approx(4 * std::numbers::pi).epsilon(1e-12));
  CHECK(schedule_moment(Measure::dirac1(0.0), 1.0) == doctest::Approx(1.0));
  CHECK(schedule_moment(Measure::dirac1(1.0), 1.0) == doctest::Approx(2.0));

  double prev = 0;
  for (double m : {1.0, 1.5, 2.0, 4.0, 8.0}) {
    const double l2 = lambda_schedule(c, m);
    CHECK(l2 >= prev);
    prev = l2;
  }
  // m = 2: (3m)² = 36, (2m²)² = 64
  CHECK(lambda_schedule(c, 2.0) == doctest::Approx(64.0));
  c.eta = 0.5;
  CHECK(lambda_schedule(c, 2.0) == doctest::Approx(4096.0));
  CHECK_THROWS_AS(lambda_schedule(c, 0.0), DomainError);
}

TEST_CASE("contraction ratios of a synthetic sequence") {
  // Diracs at 1 − 2^{-n}: W_1 + W_1 between successive iterates halves.
  std::vector<Flow> hist;
  for (int n = 0; n < 6; ++n) hist.push_back(Flow::constant(Measure::dirac1(1 - std::ldexp(1.0, -n)), {0.0, 0.5, 1.0}));
  const RateSeries s = contraction_rate(hist, 4.0, 1.0, 1.0);
  REQUIRE(s.ratios.size() == 4);
  for (double r : s.ratios) CHECK(r == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(s.geometric);
  CHECK_FALSE(s.truncated);

  std::vector<Flow> same(4, Flow::constant(Measure::dirac1(0.3), {0.0, 1.0}));
  const RateSeries z = contraction_rate(same, 4.0, 1.0, 1.0);
  CHECK(z.ratios.empty());
  CHECK(z.truncated);

  const RateSeries d = contraction_ratios({1.0, 0.5, 1e-14, 1e-15});
  CHECK(d.ratios.size() == 2);
  CHECK(d.truncated);
  CHECK_THROWS_AS(contraction_rate(std::vector<Flow>(2, same[0]), 1.0, 1.0, 1.0), DomainError);
}

TEST_CASE("contraction monitor escalates lambda") {
  SUBCASE("doubling restores contraction") {
    // Picard profile (Ct)^n / n!: grows at small λ, contracts once λ > C.
    ContractionMonitor m(0.1, 10, 1e-12, "test map");
    std::vector<double> t;
    for (int i = 0; i <= 10; ++i) t.push_back(i / 10.0);
    double fact = 1;
    for (int n = 1; n <= 10; ++n) {
      fact *= n;
      std::vector<double> d;
      for (double s : t) d.push_back(std::pow(10.0 * s, n) / fact);
      m.add(synthetic(t, d));
    }
    CHECK(m.doublings() > 0);
    CHECK(m.lambda() > 0.1);
    const std::vector<double> r = m.ratios();
    REQUIRE(r.size() >= 3);
    CHECK(r.back() < 1.0);
  }
  SUBCASE("forced non-contraction doubles to the cap") {
    ContractionMonitor m(1.0, 3, 1e-12, "test map");
    bool thrown = false;
    double y = 1;
    for (int n = 0; n < 6 && !thrown; ++n) {
      try {
        m.add(synthetic({0.0, 1.0}, {0.0, y}));
      } catch (const NonContractionError& e) {
        thrown = true;
        CHECK(e.lambda() == doctest::Approx(8.0));
        CHECK(e.ratios().size() >= 3);
      }
      y *= 1.2;
    }
    CHECK(thrown);
    CHECK(m.doublings() == 3);
  }
  SUBCASE("floor truncates ratios") {
    ContractionMonitor m(1.0, 3, 1e-6, "test map");
    for (double v : {1.0, 1e-3, 1e-7, 1e-7, 1e-7, 1e-7}) m.add(synthetic({0.0}, {v}));
    CHECK(m.ratios().size() == 2);
    CHECK(m.doublings() == 0);
  }
}

TEST_CASE("psi map") {
  SUBCASE("brownian output ignores the input flow") {
    const Model bm = shipped("brownian");
    const SimConfig cfg = small();
    const Measure g = Measure::dirac1(0.0);
    const Flow a = Flow::constant(Measure::dirac1(0.0), {0.0});
    const Flow b = Flow::constant(Measure::atoms1({-3.0, 5.0}), {0.0});
    const Flow pa = psi_map(bm, g, a, a, cfg), pb = psi_map(bm, g, b, b, cfg);
    CHECK(same_flow(pa, pb));
    REQUIRE(pa.size() == 11);
    CHECK(pa.at(1.0).variance() == doctest::Approx(1.0).epsilon(0.1));
  }
  SUBCASE("nu shift contracts at lambda_1") {
    const Model m = shipped("tanh_diffusion");
    const SimConfig cfg = small();
    const Measure g = Measure::dirac1(0.0);
    const ModelConstants& mc = m.constants();
    const double lam = lambda_thresholds(mc, schedule_moment(g, mc.k)).l1;
    const std::vector<double> grid = solver_grid(cfg);
    const Flow mu = Flow::constant(g, grid);
    const Flow n1 = psi_map(m, g, mu, mu, cfg);
    std::vector<Measure> shifted;
    for (const Measure& x : n1.measures()) {
      std::vector<double> c = x.coords();
      for (double& v : c) v += 0.2;
      shifted.emplace_back(1, c);
    }
    const Flow n2(grid, shifted);
    FlowMetricOptions opt;
    const double before = rho_lambda(n1, n2, lam, mc.k, mc.eta, opt);
    const double after = rho_lambda(psi_map(m, g, mu, n1, cfg), psi_map(m, g, mu, n2, cfg), lam, mc.k, mc.eta, opt);
    CHECK(before > 0);
    CHECK(after / before < 1.0);
  }
}

TEST_CASE("inner fixed point") {
  const Measure g = Measure::dirac1(0.0);
  SUBCASE("distribution-free diffusion takes one iteration") {
    const Model m = shipped("arctan_mean");
    const SimConfig cfg = small();
    InnerStats st;
    inner_solve(m, g, Flow::constant(g, solver_grid(cfg)), cfg, 10.0, 1e-6, {}, &st);
    CHECK(st.iterations == 1);
  }
  SUBCASE("tanh diffusion variance matches its ODE") {
    const Model m = shipped("tanh_diffusion");
    const SimConfig cfg = small(20000, 1e-3);
    const Flow mu = Flow::constant(g, solver_grid(cfg));
    InnerStats st;
    const Flow nu = inner_solve(m, g, mu, cfg, 4096.0, 1e-4, {}, &st);
    CHECK(st.iterations >= 2);
    CHECK(st.distances.back() < 1e-4);
    for (double t : {0.2, 0.5, 1.0}) {
      const double v = tanh_variance(t), se = v * std::sqrt(2.0 / cfg.n_particles);
      CHECK(std::abs(nu.at(t).variance() - v) <= 3 * se + 5 * cfg.dt);
    }
  }
  SUBCASE("halving the tolerance moves the fixed point by at most tol") {
    const Model m = shipped("tanh_diffusion");
    const SimConfig cfg = small();
    const ModelConstants& mc = m.constants();
    const Flow mu = Flow::constant(g, solver_grid(cfg));
    const double tol = 1e-3, lam = 16.0;
    const Flow a = inner_solve(m, g, mu, cfg, lam, tol), b = inner_solve(m, g, mu, cfg, lam, tol / 2);
    CHECK(rho_lambda(a, b, lam, mc.k, mc.eta) <= tol);
  }
  SUBCASE("non-positive inputs") {
    const Model m = shipped("tanh_diffusion");
    const SimConfig cfg = small(100);
    const Flow mu = Flow::constant(g, solver_grid(cfg));
    CHECK_THROWS_AS(inner_solve(m, g, mu, cfg, 0.0, 1e-3), DomainError);
    CHECK_THROWS_AS(inner_solve(m, g, mu, cfg, 1.0, 0.0), DomainError);
  }
}

TEST_CASE("phi map") {
  const Measure g = Measure::dirac1(0.0);
  const SimConfig cfg = small();
  const std::vector<double> grid = solver_grid(cfg);
  SUBCASE("distribution-free drift ignores mu") {
    const Model m = shipped("tanh_diffusion");
    const Flow a = phi_map(m, g, Flow::constant(g, grid), cfg, 16.0, 1e-6);
    const Flow b = phi_map(m, g, Flow::constant(Measure::atoms1({2.0, 4.0}), grid), cfg, 16.0, 1e-6);
    CHECK(same_flow(a, b));
  }
  SUBCASE("mu shift contracts at lambda_2") {
    const Model m = shipped("mean_field_coupled");
    const ModelConstants& mc = m.constants();
    const double lam = lambda_schedule(mc, schedule_moment(g, mc.k));
    FixedPointOptions opt;
    const Flow m1 = phi_map(m, g, Flow::constant(g, grid), cfg, lam, 1e-6, opt);
    std::vector<Measure> shifted;
    for (const Measure& x : m1.measures()) {
      std::vector<double> c = x.coords();
      for (double& v : c) v += 0.3;
      shifted.emplace_back(1, c);
    }
    const Flow m2(grid, shifted);
    const double before = rho_tilde_lambda(m1, m2, lam, mc.k, opt.metric);
    const double after = rho_tilde_lambda(phi_map(m, g, m1, cfg, lam, 1e-6, opt), phi_map(m, g, m2, cfg, lam, 1e-6, opt),
                                          lam, mc.k, opt.metric);
    CHECK(before > 0);
    CHECK(after / before < 1.0);
  }
}

TEST_CASE("solve brownian") {
  const SolveReport r = solve_mvsde(shipped("brownian"), Measure::dirac1(0.0), small(), 1e-4);
  CHECK(r.converged);
  CHECK(r.outer_iterations == 1);
  CHECK(r.inner_iterations == std::vector<std::size_t>{1});
  CHECK(r.solution.at(1.0).variance() == doctest::Approx(1.0).epsilon(0.1));
  CHECK(r.lambda_start == doctest::Approx(4 * std::numbers::pi));
}

TEST_CASE("solve arctan mean") {
  const Model m = shipped("arctan_mean");
  const Measure g = Measure::dirac1(1.0);
  const SimConfig cfg = small(20000, 1e-2);
  const double tol = 1e-4;
  const SolveReport r = solve_mvsde(m, g, cfg, tol);
  REQUIRE(r.converged);
  CHECK(r.outer_iterations >= 2);
  CHECK(r.residual < tol);
  CHECK(r.lambda_start == doctest::Approx(64.0));
  for (double x : r.contraction_history_sup) CHECK(x < 1.0);
  CHECK(r.noise_floor > 0);

  for (std::size_t i = 1; i < r.solution.size(); ++i) {
    const double t = r.solution.times()[i];
    const Measure& law = r.solution.at_node(i);
    const double se = std::sqrt(law.variance() / cfg.n_particles);
    CHECK(std::abs(law.mean() - arctan_mean(1.0, t)) <= 3 * se + cfg.dt);
    CHECK(law.variance() == doctest::Approx(t).epsilon(0.1));
  }

  SUBCASE("ratios weakly decrease in lambda") {
    for (double base : {1.0, r.lambda_used}) {
      ContractionMonitor a(base, 0, 1e-12, "a"), b(2 * base, 0, 1e-12, "b"), c(4 * base, 0, 1e-12, "c");
      std::vector<double> ra, rb, rc;
      for (const FlowDistances& d : r.outer_history) {
        a.add(d);
        b.add(d);
        c.add(d);
      }
      ra = a.ratios();
      rb = b.ratios();
      rc = c.ratios();
      REQUIRE(ra.size() == rb.size());
      REQUIRE(rb.size() == rc.size());
      for (std::size_t n = 0; n < ra.size(); ++n) {
        CHECK(rb[n] <= 1.1 * ra[n]);
        CHECK(rc[n] <= 1.1 * rb[n]);
      }
    }
  }
  SUBCASE("fixed point residual and path independence") {
    const ModelConstants& mc = m.constants();
    FixedPointOptions opt;
    const Flow once = phi_map(m, g, r.solution, cfg, r.lambda_used, tol, opt);
    const double res = rho_tilde_lambda(once, r.solution, 0.0, mc.k, opt.metric);
    CHECK(res <= 2 * tol + 1e-12);
    const Flow twice = phi_map(m, g, once, cfg, r.lambda_used, tol, opt);
    CHECK(rho_tilde_lambda(twice, r.solution, 0.0, mc.k, opt.metric) <= 3 * r.noise_floor);
    CHECK(rho_tilde_lambda(twice, r.solution, 0.0, mc.k, opt.metric) <= 4 * tol);
  }
  SUBCASE("deterministic") {
    const SolveReport again = solve_mvsde(m, g, cfg, tol);
    CHECK(to_json(again).dump() == to_json(r).dump());
  }
}

TEST_CASE("solve coupled model") {
  const Model m = shipped("mean_field_coupled");
  SimConfig cfg = small(4000, 1e-2);
  cfg.t1 = 0.5;
  const SolveReport r = solve_mvsde(m, Measure::dirac1(0.0), cfg, 1e-3);
  CHECK(r.converged);
  CHECK(r.residual < 1e-3);
  for (double x : r.contraction_history_sup) CHECK(x < 1.0);
  for (std::size_t n : r.inner_iterations) CHECK(n >= 1);
  const nlohmann::json j = to_json(r);
  CHECK(j["nodes"].size() == r.solution.size());
  // m = 1, min(beta, eta) = 1/2: (3m)^4 = 81
  CHECK(j["lambda_start"].get<double>() == doctest::Approx(81.0));

  FixedPointOptions few;
  few.max_outer = 1;
  CHECK_THROWS_AS(solve_mvsde(m, Measure::dirac1(0.0), cfg, 1e-9, few), ConvergenceError);
  CHECK_THROWS_AS(solve_mvsde(m, Measure::dirac1(0.0), cfg, 0.0), DomainError);
}
