#include "mvsde/sde_engine.hpp"

#include <algorithm>
#include <cmath>

#include "mvsde/errors.hpp"
#include "mvsde/rng.hpp"
#include "mvsde/stats.hpp"

namespace mvsde {

nlohmann::json to_json(const SimConfig& c) {
  return {{"n_particles", c.n_particles}, {"dt", c.dt}, {"t0", c.t0}, {"t1", c.t1}, {"seed", c.seed},
          {"crn", c.crn}, {"stream", c.stream}, {"report_times", c.report_times}};
}

std::vector<double> output_times(const Flow& mu_flow, const SimConfig& cfg) {
  const double eps = 1e-12 * std::max(1.0, std::abs(cfg.t1));
  std::vector<double> out{cfg.t0};
  const std::vector<double>& src = cfg.report_times.empty() ? mu_flow.times() : cfg.report_times;
  for (double t : src)
    if (t > cfg.t0 + eps && t < cfg.t1 - eps) out.push_back(t);
  out.push_back(cfg.t1);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end(), [&](double a, double b) { return std::abs(a - b) <= eps; }),
            out.end());
  return out;
}

namespace {

// Standard normals for one step: entry c depends only on (key, c), so a
// particle's increment is independent of the ensemble size.
void fill_normals(std::uint64_t key, std::vector<double>& z) {
  const std::size_t n = z.size(), pairs = (n + 1) / 2;
#pragma omp parallel for schedule(static)
  for (std::size_t m = 0; m < pairs; ++m) {
    const std::uint64_t b1 = hash_combine(key, 2 * m), b2 = hash_combine(key, 2 * m + 1);
    const double u1 = (static_cast<double>(b1 >> 11) + 0.5) * 0x1.0p-53;
    const double u2 = (static_cast<double>(b2 >> 11) + 0.5) * 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double ph = 2.0 * 3.14159265358979323846 * u2;
    z[2 * m] = r * std::cos(ph);
    if (2 * m + 1 < n) z[2 * m + 1] = r * std::sin(ph);
  }
}

}  // namespace

Flow simulate_frozen(const Model& model, const Flow& mu_flow, const Flow& nu_flow, const Measure& init,
                     const SimConfig& cfg) {
  if (cfg.n_particles == 0) throw DomainError("n_particles must be at least 1");
  if (!(cfg.t1 > cfg.t0)) throw DomainError("simulation interval is empty");
  if (!(cfg.dt > 0) || cfg.dt > cfg.t1 - cfg.t0 + 1e-15) throw DomainError("dt must lie in (0, t1 - t0]");
  if (init.dim() != model.dim()) throw DomainError("initial measure has the wrong dimension");
  if (!mu_flow.covers(cfg.t0, cfg.t1) || !nu_flow.covers(cfg.t0, cfg.t1))
    throw DomainError("coefficient flows do not cover the simulation interval");

  const std::size_t d = model.dim(), n = cfg.n_particles;
  Measure start = init.size() == n ? init : resample(init, n, hash_combine(cfg.seed, 0x1a17ULL));
  std::vector<double> X = start.coords();
  const std::vector<double> weights = start.weights();

  const auto nodes = output_times(mu_flow, cfg);
  FlowFunctionals drift_slots(model, mu_flow, FlowFunctionals::Part::drift);
  FlowFunctionals diff_slots(model, nu_flow, FlowFunctionals::Part::diffusion);
  const bool record = model.n_drift_functionals() + model.n_diffusion_functionals() > 0;
  auto track = std::make_shared<FunctionalTrack>();
  track->signature = model.signature();
  auto record_step = [&](double t) {
    track->step_times.push_back(t);
    track->drift_values.push_back(eval_functionals(model.drift_functional_list(), t, d, X, weights));
    track->diffusion_values.push_back(eval_functionals(model.diffusion_functional_list(), t, d, X, weights));
  };

  std::vector<Measure> laws{Measure(d, X, weights)};
  const bool drift_const = model.drift_space_free(), sigma_const = model.sigma_space_free();
  const std::uint64_t base = cfg.crn ? cfg.seed : hash_combine(cfg.seed, cfg.stream + 0x51ULL);
  const std::vector<double> origin(d, 0.0);
  std::vector<double> Z(n * d), b0(d), s0(d * d);
  for (std::size_t k = 0; k + 1 < nodes.size(); ++k) {
    const double gap = nodes[k + 1] - nodes[k];
    const std::size_t steps = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(gap / cfg.dt - 1e-9)));
    const double h = gap / steps, sqh = std::sqrt(h);
    for (std::size_t j = 0; j < steps; ++j) {
      const double t = nodes[k] + j * h;
      if (record) record_step(t);
      const std::vector<double> bs = drift_slots.at(t);
      const std::vector<double> ss = diff_slots.at(t);
      fill_normals(hash_combine(base, double_bits(t)), Z);
      if (drift_const) model.drift_raw(t, origin, bs, b0);
      if (sigma_const) model.sigma_raw(t, origin, ss, s0);
      if (d == 1 && drift_const && sigma_const) {
        const double shift = b0[0] * h, scale = s0[0] * sqh;
#pragma omp parallel for schedule(static)
        for (std::size_t i = 0; i < n; ++i) X[i] += shift + scale * Z[i];
        continue;
      }
#pragma omp parallel
      {
        std::vector<double> b(b0), sig(s0), xi(d);
#pragma omp for schedule(static)
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t a = 0; a < d; ++a) xi[a] = X[i * d + a];
          if (!drift_const) model.drift_raw(t, xi, bs, b);
          if (!sigma_const) model.sigma_raw(t, xi, ss, sig);
          for (std::size_t a = 0; a < d; ++a) {
            double noise = 0;
            for (std::size_t c = 0; c < d; ++c) noise += sig[a * d + c] * Z[i * d + c];
            X[i * d + a] = xi[a] + b[a] * h + noise * sqh;
          }
        }
      }
    }
    for (double v : X)
      if (!std::isfinite(v)) throw NumericError("particle left the representable range");
    laws.emplace_back(d, X, weights);
  }
  if (record) record_step(nodes.back());
  Flow out(nodes, std::move(laws));
  if (record) out.track = std::move(track);
  return out;
}

NntReport moment_check_nnt(const Model& model, const Flow& mu_flow, const Flow& nu_flow, const Measure& init,
                           const SimConfig& cfg, double p, double tolerance) {
  if (!(p > 0)) throw DomainError("moment exponent must be positive");
  const Flow law = simulate_frozen(model, mu_flow, nu_flow, init, cfg);
  const Measure& x0 = law.at_node(0);
  NntReport r;
  r.p = p;
  r.tolerance = tolerance;
  const std::size_t d = model.dim();
  for (std::size_t k = 1; k < law.size(); ++k) {
    const Measure& xt = law.at_node(k);
    double m = 0;
    for (std::size_t i = 0; i < xt.size(); ++i) {
      double r2 = 0;
      for (std::size_t a = 0; a < d; ++a) r2 += std::pow(xt.point(i)[a] - x0.point(i)[a], 2);
      m += xt.weight(i) * std::pow(r2, p / 2);
    }
    r.times.push_back(law.times()[k] - cfg.t0);
    r.moments.push_back(m);
  }
  const LineFit fit = fit_loglog(r.times, r.moments);
  r.alpha = fit.slope;
  r.C = std::exp(fit.intercept);
  r.passed = r.alpha >= p / 2 - tolerance;
  return r;
}

nlohmann::json to_json(const NntReport& r) {
  return {{"p", r.p}, {"times", r.times}, {"moments", r.moments}, {"C", r.C},
          {"alpha", r.alpha}, {"tolerance", r.tolerance}, {"passed", r.passed}};
}

}  // namespace mvsde
