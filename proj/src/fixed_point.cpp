#include "mvsde/fixed_point.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mvsde {

namespace {

SimConfig on_grid(const SimConfig& cfg) {
  SimConfig c = cfg;
  c.crn = true;
  c.report_times = solver_grid(cfg);
  return c;
}

}  // namespace

ContractionMonitor::ContractionMonitor(double lambda, std::size_t max_doublings, double floor, std::string what)
    : lambda_(lambda), max_doublings_(max_doublings), floor_(floor), what_(std::move(what)) {}

double ContractionMonitor::add(FlowDistances d) {
  history_.push_back(std::move(d));
  while (stalled()) {
    if (doublings_ == max_doublings_) {
      std::ostringstream os;
      os << what_ << " is not contracting at lambda " << lambda_ << "; ratios:";
      const std::vector<double> r = ratios();
      for (double x : r) os << ' ' << x;
      throw NonContractionError(os.str(), lambda_, r);
    }
    lambda_ *= 2.0;
    ++doublings_;
  }
  return history_.back().value(0.0);
}

std::vector<double> ContractionMonitor::values(double lambda) const {
  std::vector<double> v;
  for (const FlowDistances& d : history_) v.push_back(d.value(lambda));
  return v;
}

std::vector<double> ContractionMonitor::ratios(double lambda) const {
  const std::vector<double> w = values(lambda), u = values(0.0);
  std::vector<double> r;
  for (std::size_t n = 1; n < w.size(); ++n) {
    if (u[n - 1] < floor_ || w[n - 1] <= 0.0) break;
    r.push_back(w[n] / w[n - 1]);
  }
  return r;
}

bool ContractionMonitor::stalled() const {
  const std::vector<double> r = ratios();
  if (r.size() < 3) return false;
  return std::all_of(r.end() - 3, r.end(), [](double x) { return x >= 1.0; });
}

std::vector<double> solver_grid(const SimConfig& cfg) {
  if (!(cfg.t1 > cfg.t0)) throw DomainError("solver grid requires t0 < t1");
  std::vector<double> g;
  if (!cfg.report_times.empty()) {
    g.push_back(cfg.t0);
    for (double t : cfg.report_times)
      if (t > cfg.t0 && t < cfg.t1) g.push_back(t);
    g.push_back(cfg.t1);
    std::sort(g.begin(), g.end());
    g.erase(std::unique(g.begin(), g.end()), g.end());
    return g;
  }
  for (int i = 0; i <= 10; ++i) g.push_back(cfg.t0 + (cfg.t1 - cfg.t0) * i / 10.0);
  g.back() = cfg.t1;
  return g;
}

Flow psi_map(const Model& model, const Measure& gamma, const Flow& mu_flow, const Flow& nu_flow,
             const SimConfig& cfg) {
  return simulate_frozen(model, mu_flow, nu_flow, gamma, on_grid(cfg));
}

Flow inner_solve(const Model& model, const Measure& gamma, const Flow& mu_flow, const SimConfig& cfg,
                 double lambda, double tol, const FixedPointOptions& opt, InnerStats* stats,
                 const Flow* start) {
  if (!(lambda > 0)) throw DomainError("inner_solve requires lambda > 0");
  if (!(tol > 0)) throw DomainError("inner_solve requires tol > 0");
  const SimConfig c = on_grid(cfg);
  InnerStats local;
  InnerStats& st = stats ? *stats : local;
  st = InnerStats{};
  st.lambda = lambda;

  Flow nu = start ? *start : Flow::constant(gamma, c.report_times);
  if (model.sigma_distribution_free()) {
    st.iterations = 1;
    return psi_map(model, gamma, mu_flow, nu, c);
  }
  const ModelConstants& mc = model.constants();
  ContractionMonitor tracker(lambda, opt.max_doublings, opt.floor, "inner map");
  for (std::size_t it = 1; it <= opt.max_inner; ++it) {
    Flow next = psi_map(model, gamma, mu_flow, nu, c);
    const double d = tracker.add(flow_distances_eta(next, nu, mc.k, mc.eta, opt.metric));
    st.iterations = it;
    st.distances = tracker.values(0.0);
    st.lambda = tracker.lambda();
    nu = std::move(next);
    if (d < tol || d < opt.floor) return nu;
  }
  std::ostringstream os;
  os << "inner iteration did not reach tol " << tol << " in " << opt.max_inner << " iterations; distances:";
  for (double d : st.distances) os << ' ' << d;
  throw ConvergenceError(os.str());
}

Flow phi_map(const Model& model, const Measure& gamma, const Flow& mu_flow, const SimConfig& cfg, double lambda,
             double tol, const FixedPointOptions& opt, InnerStats* stats, const Flow* start) {
  return inner_solve(model, gamma, mu_flow, cfg, lambda, tol, opt, stats, start);
}

double schedule_moment(const Measure& gamma, double k) {
  return integrate(gamma, [k](std::span<const double> x) {
    double r2 = 0;
    for (double v : x) r2 += v * v;
    return 1.0 + std::pow(std::sqrt(r2), k);
  });
}

LambdaThresholds lambda_thresholds(const ModelConstants& c, double m) {
  if (!(c.beta > 0 && c.eta > 0 && m > 0)) throw DomainError("lambda schedule needs positive constants");
  const double be = std::min(c.beta, c.eta);
  LambdaThresholds l;
  l.l0 = std::max(1.0, std::pow(2.0 * std::tgamma(c.beta / 2.0), 2.0 / c.beta));
  l.l1 = std::max(l.l0, std::pow(3.0 * m, 2.0 / be));
  l.l2 = std::max(l.l1, std::pow(2.0 * m * m, 2.0 / be));
  return l;
}

double lambda_schedule(const ModelConstants& c, double m) { return lambda_thresholds(c, m).l2; }

SolveReport solve_mvsde(const Model& model, const Measure& gamma, const SimConfig& cfg, double tol,
                        const FixedPointOptions& opt) {
  if (!(tol > 0)) throw DomainError("solve_mvsde requires tol > 0");
  if (gamma.dim() != model.dim()) throw DomainError("initial law and model dimensions differ");
  const ModelConstants& mc = model.constants();
  const SimConfig c = on_grid(cfg);
  SolveReport rep;
  rep.tol = tol;
  rep.lambda_start = lambda_schedule(mc, schedule_moment(gamma, mc.k));
  double inner_lambda = rep.lambda_start;

  Flow mu = Flow::constant(gamma, c.report_times);
  Flow nu_prev;
  bool have_prev = false;
  ContractionMonitor tracker(rep.lambda_start, opt.max_doublings, opt.floor, "outer map");
  double last = 1.0;
  for (std::size_t n = 1; n <= opt.max_outer; ++n) {
    InnerStats st;
    const double inner_tol = std::max(tol, opt.inner_relative * last);
    Flow next = phi_map(model, gamma, mu, c, inner_lambda, inner_tol, opt, &st,
                        opt.warm_start && have_prev ? &nu_prev : nullptr);
    inner_lambda = st.lambda;
    rep.inner_iterations.push_back(st.iterations);
    rep.outer_iterations = n;
    if (model.drift_distribution_free()) {
      mu = std::move(next);
      rep.converged = true;
      break;
    }
    const double d = tracker.add(flow_distances_var(next, mu, mc.k, opt.metric));
    rep.residual = d;
    last = d;
    mu = std::move(next);
    nu_prev = mu;
    have_prev = true;
    if (d < tol || d < opt.floor) {
      rep.converged = true;
      break;
    }
  }
  rep.lambda_used = std::max(tracker.lambda(), inner_lambda);
  rep.outer_distances = tracker.values(tracker.lambda());
  rep.outer_sup_distances = tracker.values(0.0);
  rep.contraction_history = tracker.ratios();
  rep.contraction_history_sup = tracker.ratios(0.0);
  rep.outer_history = tracker.history();
  if (!rep.converged) {
    std::ostringstream os;
    os << "outer iteration did not reach tol " << tol << " in " << opt.max_outer
       << " iterations; use a shorter horizon or more particles";
    throw ConvergenceError(os.str());
  }
  if (opt.estimate_noise) {
    SimConfig alt = c;
    alt.seed = c.seed ^ 0x9e3779b97f4a7c15ULL;
    const Flow other = psi_map(model, gamma, mu, mu, alt);
    rep.noise_floor = flow_distances_var(other, mu, mc.k, opt.metric).value(0.0);
  }
  rep.solution = std::move(mu);
  return rep;
}

RateSeries contraction_ratios(const std::vector<double>& d, double floor) {
  RateSeries s;
  for (std::size_t n = 1; n < d.size(); ++n) {
    if (d[n - 1] < floor) {
      s.truncated = true;
      break;
    }
    s.ratios.push_back(d[n] / d[n - 1]);
  }
  if (!d.empty() && d.back() < floor) s.truncated = true;
  s.geometric = std::all_of(s.ratios.begin(), s.ratios.end(), [](double r) { return r < 1.0; });
  return s;
}

RateSeries contraction_rate(const std::vector<Flow>& history, double lambda, double k, double eta,
                            const FlowMetricOptions& opt, double floor) {
  if (history.size() < 3) throw DomainError("contraction_rate needs at least three iterates");
  std::vector<double> d;
  for (std::size_t n = 1; n < history.size(); ++n) {
    d.push_back(rho_lambda(history[n], history[n - 1], lambda, k, eta, opt));
    if (d.back() < floor) break;
  }
  return contraction_ratios(d, floor);
}

nlohmann::json to_json(const SolveReport& r) {
  nlohmann::json laws = nlohmann::json::array();
  for (std::size_t i = 0; i < r.solution.size(); ++i) {
    const Measure& m = r.solution.at_node(i);
    nlohmann::json node{{"t", r.solution.times()[i]}};
    std::vector<double> mean, var;
    for (std::size_t a = 0; a < m.dim(); ++a) {
      mean.push_back(m.mean(a));
      var.push_back(m.variance(a));
    }
    node["mean"] = mean;
    node["variance"] = var;
    laws.push_back(node);
  }
  return {{"converged", r.converged},
          {"outer_iterations", r.outer_iterations},
          {"inner_iterations", r.inner_iterations},
          {"outer_distances", r.outer_distances},
          {"contraction_history", r.contraction_history},
          {"outer_sup_distances", r.outer_sup_distances},
          {"contraction_history_sup", r.contraction_history_sup},
          {"lambda_start", r.lambda_start},
          {"lambda_used", r.lambda_used},
          {"tol", r.tol},
          {"residual", r.residual},
          {"noise_floor", r.noise_floor},
          {"nodes", laws}};
}

}  // namespace mvsde
