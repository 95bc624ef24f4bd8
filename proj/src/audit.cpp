#include "mvsde/audit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "mvsde/errors.hpp"
#include "mvsde/metrics.hpp"
#include "mvsde/rng.hpp"

namespace mvsde {

namespace {

constexpr std::size_t kAtoms = 8;

const char* const kBoundedByK[] = {"sigma_holder_space", "sigma_measure", "sigma_joint", "drift_measure",
                                   "a_mixed"};

struct SampleResult {
  std::map<std::string, double> ratios;
  double spec_min = std::numeric_limits<double>::infinity();
  double spec_max = 0.0;
  AuditWitness base;
  std::string error;
};

double op_norm(const Eigen::MatrixXd& m) {
  if (m.size() == 1) return std::abs(m(0, 0));
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues()(0);
}

double dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

SampleResult run_sample(const Model& model, std::size_t s, std::uint64_t seed) {
  SampleResult r;
  const std::size_t d = model.dim();
  const auto& c = model.constants();
  CounterRng rng(seed, s);
  const double t = rng.uniform() * model.horizon();
  std::vector<double> x(d), y(d);
  for (auto& v : x) v = 2.0 * rng.normal();
  const bool near = s % 2 == 0;
  for (std::size_t i = 0; i < d; ++i) y[i] = near ? x[i] + 0.05 * rng.normal() : 2.0 * rng.normal();
  std::vector<double> a1(kAtoms * d), a2(kAtoms * d);
  for (auto& v : a1) v = -3.0 + 6.0 * rng.uniform();
  for (std::size_t i = 0; i < a2.size(); ++i)
    a2[i] = (s % 4 < 2) ? std::clamp(a1[i] + 0.1 * rng.normal(), -3.0, 3.0) : -3.0 + 6.0 * rng.uniform();
  const Measure mu1(d, a1), mu2(d, a2);
  r.base = AuditWitness{"", 0.0, s, t, x, y, a1, a2};

  const double Wk = wasserstein(mu1, mu2, c.k).value;
  const double We = wasserstein_eta(mu1, mu2, c.eta).value;
  const double Vk = weighted_variation_atoms(mu1, mu2, c.k).value;
  const double V0 = weighted_variation_atoms(mu1, mu2, 0).value;
  const double dxy = dist(x, y), hx = std::pow(dxy, c.beta);

  const auto ds1 = model.diffusion_functionals(t, mu1), ds2 = model.diffusion_functionals(t, mu2);
  const auto bs1 = model.drift_functionals(t, mu1), bs2 = model.drift_functionals(t, mu2);
  const Eigen::MatrixXd sx1 = model.sigma_matrix(t, x, ds1), sy1 = model.sigma_matrix(t, y, ds1);
  const Eigen::MatrixXd sx2 = model.sigma_matrix(t, x, ds2), sy2 = model.sigma_matrix(t, y, ds2);
  auto put = [&](const char* key, double num, double den) {
    if (den > 1e-300) r.ratios[key] = num / den;
  };
  put("sigma_holder_space", op_norm(sx1 - sy1), hx);
  put("sigma_measure", op_norm(sx1 - sx2), We + Wk);
  put("sigma_measure_wk", op_norm(sx1 - sx2), Wk);
  put("sigma_joint", op_norm(sx1 - sy2), hx + We + Wk);
  const Eigen::MatrixXd ax1 = sx1 * sx1.transpose(), ay1 = sy1 * sy1.transpose();
  const Eigen::MatrixXd ax2 = sx2 * sx2.transpose(), ay2 = sy2 * sy2.transpose();
  const double mixed = op_norm((ax1 - ay1) - (ax2 - ay2));
  put("a_mixed", mixed, hx * (We + Wk));
  put("a_mixed_wk", mixed, hx * Wk);

  double g2 = 0;
  const double h = 1e-5;
  for (std::size_t i = 0; i < d; ++i) {
    std::vector<double> xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    g2 += std::pow(op_norm((model.sigma_matrix(t, xp, ds1) - model.sigma_matrix(t, xm, ds1)) / (2 * h)), 2);
  }
  r.ratios["sigma_grad"] = std::sqrt(g2);

  Eigen::VectorXd b1(d), b2(d);
  model.drift_raw(t, x, bs1, std::span<double>(b1.data(), d));
  model.drift_raw(t, x, bs2, std::span<double>(b2.data(), d));
  const double db = (b1 - b2).norm();
  put("drift_measure", db, Vk + Wk);
  put("drift_kvar", db, Vk);
  put("drift_tv", db, V0 + Wk);
  r.ratios["drift_bound"] = std::max(b1.norm(), b2.norm());

  for (const Eigen::MatrixXd* a : {&ax1, &ay2}) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(*a);
    r.spec_min = std::min(r.spec_min, es.eigenvalues().minCoeff());
    r.spec_max = std::max(r.spec_max, es.eigenvalues().maxCoeff());
  }
  for (auto& [k, v] : r.ratios)
    if (!std::isfinite(v)) r.error = "non-finite audit ratio " + k;
  return r;
}

}  // namespace

AuditReport lipschitz_audit(const Model& model, std::size_t n_samples, std::uint64_t seed) {
  if (n_samples == 0) throw DomainError("audit needs at least one sample");
  std::vector<SampleResult> results(n_samples);
#pragma omp parallel for schedule(dynamic, 16)
  for (std::size_t s = 0; s < n_samples; ++s) {
    try {
      results[s] = run_sample(model, s, seed);
    } catch (const std::exception& e) {
      results[s].error = e.what();
    }
  }

  const auto& c = model.constants();
  AuditReport rep;
  rep.samples = n_samples;
  rep.seed = seed;
  rep.K = c.K;
  rep.sigma_space_free = model.sigma_space_free();
  double spec_min = std::numeric_limits<double>::infinity(), spec_max = 0;
  AuditWitness wmin, wmax;
  for (std::size_t s = 0; s < n_samples; ++s) {
    const auto& r = results[s];
    if (!r.error.empty()) throw NumericError("audit sample " + std::to_string(s) + ": " + r.error);
    for (auto& [k, v] : r.ratios) {
      auto it = rep.ratios.find(k);
      if (it == rep.ratios.end() || v > it->second) {
        rep.ratios[k] = v;
        AuditWitness w = r.base;
        w.ratio = k;
        w.value = v;
        rep.witnesses[k] = std::move(w);
      }
    }
    if (r.spec_min < spec_min) {
      spec_min = r.spec_min;
      wmin = r.base;
    }
    if (r.spec_max > spec_max) {
      spec_max = r.spec_max;
      wmax = r.base;
    }
  }
  rep.ratios["spectrum_min"] = spec_min;
  rep.ratios["spectrum_max"] = spec_max;
  wmin.ratio = "spectrum_min";
  wmin.value = spec_min;
  wmax.ratio = "spectrum_max";
  wmax.value = spec_max;
  rep.witnesses["spectrum_min"] = wmin;
  rep.witnesses["spectrum_max"] = wmax;

  const double slack = 1 + 1e-9;
  for (const char* key : kBoundedByK) {
    auto it = rep.ratios.find(key);
    if (it != rep.ratios.end() && it->second > c.K * slack) rep.violations.push_back(rep.witnesses[key]);
  }
  if (rep.ratios["sigma_grad"] > c.grad_sigma_bound * (1 + 1e-6) + 1e-8)
    rep.violations.push_back(rep.witnesses["sigma_grad"]);
  if (rep.ratios["drift_bound"] > c.b_sup * slack + 1e-12) rep.violations.push_back(rep.witnesses["drift_bound"]);
  if (spec_min < 1.0 / c.K / slack) rep.violations.push_back(wmin);
  if (spec_max > c.K * slack) rep.violations.push_back(wmax);

  auto within = [&](const char* key) {
    auto it = rep.ratios.find(key);
    return it == rep.ratios.end() || it->second <= c.K * slack;
  };
  rep.drift_tv_lipschitz = within("drift_tv");
  rep.condition_i = within("sigma_measure_wk") && within("a_mixed_wk");
  rep.condition_ii = model.sigma_space_free();
  return rep;
}

void require_pass(const AuditReport& r) {
  if (r.passed()) return;
  const auto& w = r.violations.front();
  std::string msg = "audit failed: " + w.ratio + " = " + std::to_string(w.value) + " at sample " +
                    std::to_string(w.sample) + " (t = " + std::to_string(w.t) + ", x =";
  for (double v : w.x) msg += " " + std::to_string(v);
  msg += "), declared K = " + std::to_string(r.K);
  if (r.violations.size() > 1) msg += "; " + std::to_string(r.violations.size() - 1) + " more";
  throw AuditFailure(msg);
}

nlohmann::json to_json(const AuditReport& r) {
  nlohmann::json j;
  j["samples"] = r.samples;
  j["seed"] = r.seed;
  j["K"] = r.K;
  j["ratios"] = r.ratios;
  j["passed"] = r.passed();
  j["flags"] = {{"sigma_space_free", r.sigma_space_free},
                {"condition_i", r.condition_i},
                {"condition_ii", r.condition_ii},
                {"drift_tv_lipschitz", r.drift_tv_lipschitz}};
  auto wj = [](const AuditWitness& w) {
    return nlohmann::json{{"ratio", w.ratio}, {"value", w.value}, {"sample", w.sample}, {"t", w.t},
                          {"x", w.x},         {"y", w.y},         {"mu1", w.mu1_atoms}, {"mu2", w.mu2_atoms}};
  };
  j["violations"] = nlohmann::json::array();
  for (auto& w : r.violations) j["violations"].push_back(wj(w));
  j["witnesses"] = nlohmann::json::object();
  for (auto& [k, w] : r.witnesses) j["witnesses"][k] = wj(w);
  return j;
}

}  // namespace mvsde
