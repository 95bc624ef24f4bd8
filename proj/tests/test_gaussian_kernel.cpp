#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "mvsde/errors.hpp"
#include "mvsde/gaussian_kernel.hpp"
#include "mvsde/stats.hpp"

using namespace mvsde;
using nlohmann::json;

namespace {

Model model_from(const std::string& diffusion, double K = 2.0) {
  json doc = json::parse(R"({"dim": 1, "horizon": 1,
    "drift": {"components": [{"op": "constant", "value": 0}]},
    "constants": {"k": 1, "eta": 1, "beta": 1, "b_sup": 0}})");
  doc["diffusion"] = {{"scalar", json::parse(diffusion)}};
  doc["constants"]["K"] = K;
  return Model::from_json(doc);
}

// σ(μ) = 1 + μ(min(|y|,1))
Model measure_scaled() {
  return model_from(R"({"op": "linear", "offset": 1, "terms": [{"coef": 1,
      "expr": {"op": "integral", "expr": {"op": "clamp1", "arg": {"op": "norm"}}}}]})", 4.0);
}

const std::vector<double> kZero{0.0};

}  // namespace

TEST_CASE("frozen_covariance") {
  const Flow f = Flow::constant(Measure::dirac1(0), {0.0, 1.0});
  const auto c1 = frozen_covariance(model_from(R"({"op": "constant", "value": 1})"), f, kZero, 0.2, 0.7);
  CHECK(c1.a(0, 0) == doctest::Approx(0.5));
  const auto c2 = frozen_covariance(model_from(R"({"op": "constant", "value": 1.3})"), f, kZero, 0.0, 0.4);
  CHECK(c2.a(0, 0) == doctest::Approx(1.69 * 0.4));
  const Model tv = model_from(R"({"op": "linear", "offset": 1, "terms": [{"coef": 0.5, "expr": {"op": "time"}}]})", 3.0);
  const auto c3 = frozen_covariance(tv, f, std::vector<double>{2.5}, 0.0, 1.0);
  CHECK(c3.a(0, 0) == doctest::Approx(19.0 / 12.0).epsilon(1e-5));
  CHECK_THROWS_AS(frozen_covariance(tv, f, kZero, 0.5, 0.5), DomainError);
  const Flow short_flow({0.0, 0.3}, {Measure::dirac1(0), Measure::dirac1(0)});
  CHECK_THROWS_AS(frozen_covariance(tv, short_flow, kZero, 0.0, 0.6), DomainError);

  // piecewise-constant flow: σ = 1 on [0, .5), 1.5 on [.5, 1]
  const Flow steps({0.0, 0.5, 1.0}, {Measure::dirac1(0), Measure::dirac1(0.5), Measure::dirac1(0.5)});
  const auto c4 = frozen_covariance(measure_scaled(), steps, kZero, 0.25, 1.0);
  CHECK(c4.a(0, 0) == doctest::Approx(0.25 * 1 + 0.5 * 2.25));
}

TEST_CASE("q_density") {
  const auto c1 = FrozenCovariance::scaled_identity(1, 1.0);
  CHECK(q_density(c1, kZero, kZero) == doctest::Approx(1 / std::sqrt(2 * std::numbers::pi)));
  const auto c2 = FrozenCovariance::scaled_identity(1, 2.0);
  CHECK(q_density(c2, std::vector<double>{1.0}, std::vector<double>{3.0}) ==
        doctest::Approx(std::exp(-1.0) / std::sqrt(4 * std::numbers::pi)));
  for (double tau : {1e-3, 0.1, 1.0, 5.0}) {
    CHECK(moment_integral_g1(FrozenCovariance::scaled_identity(1, tau), 0, 0) == doctest::Approx(1).epsilon(1e-6));
    CHECK(moment_integral_g1(FrozenCovariance::scaled_identity(2, tau), 0, 0) == doctest::Approx(1).epsilon(1e-6));
  }
}

TEST_CASE("q_derivatives") {
  const auto c1 = FrozenCovariance::scaled_identity(1, 1.0);
  CHECK(q_derivatives(c1, std::vector<double>{0.4}, std::vector<double>{0.4}).gradient(0) == 0.0);
  const auto d = q_derivatives(c1, kZero, std::vector<double>{1.0});
  CHECK(d.gradient(0) == doctest::Approx(0.24197072451914337));
  const double h = 1e-5;
  const double fd = (q_density(c1, std::vector<double>{h}, std::vector<double>{1.0}) -
                     q_density(c1, std::vector<double>{-h}, std::vector<double>{1.0})) / (2 * h);
  CHECK(std::abs(fd / d.gradient(0) - 1) <= 1e-6);

  // ∫∇q dy = 0 and ∫∇²q dy = 0 on a wide grid
  for (std::size_t dim : {1u, 2u}) {
    Eigen::MatrixXd a(dim, dim);
    if (dim == 1) a << 0.7;
    else a << 0.8, 0.3, 0.3, 0.5;
    FrozenCovariance c;
    c.a = a;
    c.t = 1;
    c.z.assign(dim, 0.0);
    const std::size_t n = dim == 1 ? 4000 : 300;
    const double L = 10, w = 2 * L / n;
    Eigen::VectorXd g = Eigen::VectorXd::Zero(dim);
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(dim, dim);
    std::vector<double> y(dim), x(dim, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < (dim == 1 ? 1 : n); ++j) {
        y[0] = -L + (i + 0.5) * w;
        if (dim == 2) y[1] = -L + (j + 0.5) * w;
        const auto r = q_derivatives(c, x, y);
        g += r.gradient * std::pow(w, dim);
        H += r.hessian * std::pow(w, dim);
      }
    CHECK(g.norm() < 1e-6);
    CHECK(H.norm() < 1e-6);
  }
}

TEST_CASE("comparison_kernel") {
  CHECK(comparison_kernel(1, 0, 1, kZero, kZero) == doctest::Approx(1 / std::sqrt(4 * std::numbers::pi)));
  double mass = 0;
  for (int i = 0; i < 4000; ++i) {
    const double y = -20 + (i + 0.5) * 0.01;
    mass += comparison_kernel(2, 0, 0.5, kZero, std::vector<double>{y}) * 0.01;
  }
  CHECK(mass == doctest::Approx(1).epsilon(1e-6));

  for (int i = 0; i <= 2; ++i) {
    double lo = 1e300, hi = 0;
    for (double tau : {1e-3, 1e-2, 1e-1}) {
      const double c = domination_constant(FrozenCovariance::scaled_identity(1, tau), 2.0, i);
      lo = std::min(lo, c);
      hi = std::max(hi, c);
    }
    CHECK(std::isfinite(hi));
    CHECK(hi / lo < 2.0);
  }
}

TEST_CASE("moment_integral_g1") {
  const auto c = FrozenCovariance::scaled_identity(1, 0.3);
  CHECK(moment_integral_g1(c, 0, 0) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(moment_integral_g1(c, 0, 2) == doctest::Approx(0.3).epsilon(1e-6));
  CHECK(moment_integral_g1(FrozenCovariance::scaled_identity(1, 1.0), 1, 0) ==
        doctest::Approx(std::sqrt(2 / std::numbers::pi)).epsilon(1e-5));
  CHECK(moment_integral_g1(c, 1, 0) == doctest::Approx(std::sqrt(2 / (std::numbers::pi * 0.3))).epsilon(1e-5));
  CHECK_THROWS_AS(moment_integral_g1(c, 3, 0), DomainError);
}

TEST_CASE("property: exponent laws") {
  const std::pair<int, double> cases[] = {{1, 0.0}, {2, 0.0}, {1, 1.0}, {0, 2.0}};
  for (std::size_t dim : {1u, 2u}) {
    for (auto [i, eps] : cases) {
      std::vector<double> taus, vals;
      for (double tau : {1e-4, 1e-3, 1e-2, 1e-1, 1.0}) {
        taus.push_back(tau);
        vals.push_back(moment_integral_g1(FrozenCovariance::scaled_identity(dim, tau), i, eps));
      }
      const auto fit = fit_loglog(taus, vals);
      CHECK(std::abs(fit.slope - (-i + eps) / 2) < 0.05);
    }
  }
}

TEST_CASE("property: analytic derivatives match finite differences") {
  std::mt19937_64 gen(31);
  std::uniform_real_distribution<double> U(-1, 1), L(0.2, 2.0);
  double worst = 0;
  for (int it = 0; it < 100; ++it) {
    const std::size_t d = 1 + it % 2;
    Eigen::MatrixXd B(d, d);
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t s = 0; s < d; ++s) B(r, s) = U(gen);
    FrozenCovariance c;
    c.a = B * B.transpose() + L(gen) * Eigen::MatrixXd::Identity(d, d);
    c.t = 1;
    std::vector<double> x(d), y(d);
    for (auto& v : x) v = U(gen);
    for (auto& v : y) v = U(gen) * 1.5;
    const auto r = q_derivatives(c, x, y);
    const double scale = std::sqrt(c.a.diagonal().maxCoeff());
    const double h = 1e-5 * scale;
    for (std::size_t a = 0; a < d; ++a) {
      auto xp = x, xm = x;
      xp[a] += h;
      xm[a] -= h;
      const double g = (q_density(c, xp, y) - q_density(c, xm, y)) / (2 * h);
      const auto rp = q_derivatives(c, xp, y), rm = q_derivatives(c, xm, y);
      const Eigen::VectorXd hc = (rp.gradient - rm.gradient) / (2 * h);
      const double gref = std::max(r.gradient.norm(), r.value / scale);
      const double href = std::max(r.hessian.norm(), r.value / (scale * scale));
      worst = std::max(worst, std::abs(g - r.gradient(a)) / gref);
      worst = std::max(worst, (hc - r.hessian.col(a)).norm() / href);
    }
  }
  CHECK(worst <= 1e-5);
}

TEST_CASE("perturbation_integral_g2") {
  const Model m = measure_scaled();
  const Flow f0 = Flow::constant(Measure::dirac1(0), {0.0, 1.0});
  CHECK(perturbation_integral_g2(m, f0, f0, kZero, 0.0, 0.5, 1, 0.0).value == 0.0);

  for (double delta : {1e-3, 1e-2, 1e-1}) {
    const Flow fd = Flow::constant(Measure::dirac1(delta), {0.0, 1.0});
    const auto r = perturbation_integral_g2(m, f0, fd, kZero, 0.0, 0.5, 0, 0.0);
    CHECK(std::abs(r.value - centered_normal_l1(0.5, std::pow(1 + delta, 2) * 0.5)) < 1e-5);
    CHECK(r.scale == doctest::Approx(2 * delta));
  }
  const double r3 = perturbation_integral_g2(m, f0, Flow::constant(Measure::dirac1(1e-3), {0.0, 1.0}), kZero, 0, 0.5, 0, 0).value;
  const double r2 = perturbation_integral_g2(m, f0, Flow::constant(Measure::dirac1(1e-2), {0.0, 1.0}), kZero, 0, 0.5, 0, 0).value;
  CHECK(std::abs((r2 / 1e-2) / (r3 / 1e-3) - 1) < 0.1);
}
