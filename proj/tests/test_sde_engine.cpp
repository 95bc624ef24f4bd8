#include <doctest.h>

#include <cmath>

#include "mvsde/errors.hpp"
#include "mvsde/metrics.hpp"
#include "mvsde/sde_engine.hpp"

using namespace mvsde;
using nlohmann::json;

namespace {

Model shipped(const std::string& name) {
  return Model::load(std::string(MVSDE_SOURCE_DIR) + "/configs/models/" + name + ".json");
}

const Flow kNone = Flow::constant(Measure::dirac1(0), {0.0});

}  // namespace

TEST_CASE("Brownian law from a Dirac") {
  const Model bm = shipped("brownian");
  SimConfig cfg;
  cfg.n_particles = 20000;
  cfg.dt = 0.01;
  cfg.t0 = 0.2;
  cfg.t1 = 1.0;
  cfg.report_times = {0.2, 0.45, 1.0};
  const Flow law = simulate_frozen(bm, kNone, kNone, Measure::dirac1(1.5), cfg);
  REQUIRE(law.size() == 3);
  for (std::size_t k = 1; k < 3; ++k) {
    const double tau = law.times()[k] - 0.2;
    const Measure& m = law.at_node(k);
    const double n = m.size();
    CHECK(std::abs(m.mean() - 1.5) < 3 * std::sqrt(tau / n));
    CHECK(std::abs(m.variance() - tau) < 3 * tau * std::sqrt(2 / n));
  }
}

TEST_CASE("determinism and stream separation") {
  const Model m = shipped("mean_field_coupled");
  SimConfig cfg;
  cfg.n_particles = 2000;
  cfg.dt = 0.01;
  cfg.t1 = 0.5;
  const Flow mu = Flow::constant(Measure::atoms1({-0.5, 1.0}), {0.0});
  const Flow a = simulate_frozen(m, mu, mu, Measure::dirac1(0.3), cfg);
  const Flow b = simulate_frozen(m, mu, mu, Measure::dirac1(0.3), cfg);
  CHECK(a.at_node(1).coords() == b.at_node(1).coords());
  cfg.crn = false;
  cfg.stream = 4;
  const Flow c = simulate_frozen(m, mu, mu, Measure::dirac1(0.3), cfg);
  CHECK(a.at_node(1).coords() != c.at_node(1).coords());
  REQUIRE(a.track);
  CHECK(a.track->signature == m.signature());
}

TEST_CASE("weak order one under dt halving") {
  // near-deterministic dynamics so the bias dominates Monte Carlo noise
  const Model m = Model::from_json(json::parse(R"({"dim": 1, "horizon": 1,
    "drift": {"components": [{"op": "linear", "terms": [{"coef": -1, "expr": {"op": "arctan", "arg": {"op": "coord", "index": 0}}}]}]},
    "diffusion": {"scalar": {"op": "constant", "value": 0.001}},
    "constants": {"K": 1e7, "k": 1, "eta": 1, "beta": 1, "b_sup": 1.5708}})"));
  std::vector<double> m2;
  for (double dt : {1e-2, 5e-3, 2.5e-3}) {
    SimConfig cfg;
    cfg.n_particles = 2000;
    cfg.dt = dt;
    const Flow law = simulate_frozen(m, kNone, kNone, Measure::dirac1(2.0), cfg);
    m2.push_back(std::pow(moment_k(law.at_node(1), 2), 2));
  }
  const double ratio = (m2[0] - m2[1]) / (m2[1] - m2[2]);
  CHECK(ratio > 1.7);
  CHECK(ratio < 2.3);
}

TEST_CASE("moment_check_nnt") {
  SimConfig cfg;
  cfg.n_particles = 50000;
  cfg.dt = 1e-3;
  cfg.report_times = {0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0};
  const Model bm = shipped("brownian");
  const auto r2 = moment_check_nnt(bm, kNone, kNone, Measure::dirac1(0.0), cfg, 2.0);
  CHECK(std::abs(r2.alpha - 1) < 0.05);
  CHECK(r2.passed);
  const auto r4 = moment_check_nnt(bm, kNone, kNone, Measure::dirac1(0.0), cfg, 4.0, 0.1);
  CHECK(std::abs(r4.alpha - 2) < 0.1);
  CHECK(r4.C == doctest::Approx(3.0).epsilon(0.1));
  const auto rb = moment_check_nnt(shipped("constant_drift"), kNone, kNone, Measure::dirac1(0.0), cfg, 2.0);
  CHECK(rb.alpha >= 0.95);
}

TEST_CASE("particle-count self-consistency") {
  const Model bm = shipped("brownian");
  SimConfig cfg;
  cfg.dt = 1.0;
  cfg.crn = false;
  auto run = [&](std::size_t n, std::uint64_t stream) {
    cfg.n_particles = n;
    cfg.stream = stream;
    return simulate_frozen(bm, kNone, kNone, Measure::dirac1(0), cfg).at_node(1);
  };
  const Measure a = run(100000, 1), b = run(100000, 2), c = run(400000, 3);
  const double indep = wasserstein_1d(a, b, 1).value, cross = wasserstein_1d(a, c, 1).value;
  CHECK(indep <= 2 * cross + 3.0 / std::sqrt(1e5));
}

TEST_CASE("displacement stays inside the Gaussian tail bound") {
  const Model m = shipped("mean_field_coupled");
  SimConfig cfg;
  cfg.n_particles = 20000;
  cfg.dt = 0.01;
  const Flow mu = Flow::constant(Measure::atoms1({3.0, 4.0}), {0.0});
  const Flow law = simulate_frozen(m, mu, mu, Measure::dirac1(0.0), cfg);
  const double bound = m.constants().b_sup + 6 * std::sqrt(m.constants().K);
  std::size_t outside = 0;
  for (std::size_t i = 0; i < law.at_node(1).size(); ++i)
    if (std::abs(law.at_node(1).point(i)[0]) > bound) ++outside;
  CHECK(outside <= 0.0001 * cfg.n_particles);
}

TEST_CASE("input validation") {
  const Model bm = shipped("brownian");
  SimConfig cfg;
  cfg.dt = 2.0;
  CHECK_THROWS_AS(simulate_frozen(bm, kNone, kNone, Measure::dirac1(0), cfg), DomainError);
  cfg.dt = 0.1;
  const Flow short_flow({0.0, 0.5}, {Measure::dirac1(0), Measure::dirac1(0)});
  CHECK_THROWS_AS(simulate_frozen(bm, short_flow, kNone, Measure::dirac1(0), cfg), DomainError);
  CHECK_THROWS_AS(simulate_frozen(bm, kNone, kNone, Measure(2, {0.0, 0.0}), cfg), DomainError);
}
