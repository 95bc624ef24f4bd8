#include "mvsde/experiments.hpp"

#include <algorithm>
#include <cmath>

#include "mvsde/audit.hpp"
#include "mvsde/duhamel.hpp"
#include "mvsde/errors.hpp"
#include "mvsde/fixed_point.hpp"
#include "mvsde/metrics.hpp"
#include "mvsde/stats.hpp"

namespace mvsde {

namespace {

using nlohmann::json;

struct Audited {
  Model model;
  AuditReport audit;
};

Audited audited(const ExperimentConfig& c, Report& r) {
  Audited a{Model::load(c.model_path), {}};
  a.audit = lipschitz_audit(a.model, c.params.audit_samples, c.sim.seed);
  r.summary["model"] = a.model.name();
  r.summary["audit"] = {{"passed", a.audit.passed()},
                        {"condition_i", a.audit.condition_i},
                        {"condition_ii", a.audit.condition_ii},
                        {"drift_tv_lipschitz", a.audit.drift_tv_lipschitz},
                        {"samples", a.audit.samples}};
  require_pass(a.audit);
  return a;
}

SimConfig sim_on(const ExperimentConfig& c, std::vector<double> extra = {}) {
  SimConfig s = c.sim;
  s.report_times = c.times;
  s.report_times.insert(s.report_times.end(), extra.begin(), extra.end());
  std::sort(s.report_times.begin(), s.report_times.end());
  s.report_times.erase(std::unique(s.report_times.begin(), s.report_times.end()), s.report_times.end());
  s.t1 = s.report_times.back();
  return s;
}

void describe(Report& r, const ExperimentConfig& c) {
  r.kind = to_string(c.kind);
  r.summary["config"] = to_json(c);
  r.summary["config"].erase("out");
}

double tv_between(const Measure& a, const Measure& b) {
  if (a.coords() == b.coords() && a.weights() == b.weights()) return 0.0;
  auto [pa, pb] = shared_densities(a, b);
  return weighted_variation(pa, pb, 0.0).value;
}

/// Flow without a recorded functional track, so that perturbed copies and
/// the base flow are evaluated the same way.
Flow plain(const Flow& f) { return Flow(f.times(), f.measures()); }

struct Fit {
  LineFit line;
  bool ok = false;
};

Fit slope(const std::vector<double>& x, const std::vector<double>& y, bool drop_endpoints) {
  Fit f;
  std::size_t usable = 0;
  for (std::size_t i = 0; i < x.size(); ++i) usable += x[i] > 0 && y[i] > 0;
  if (usable < 2) return f;
  f.line = fit_loglog(x, y, drop_endpoints);
  f.ok = f.line.points >= 2;
  return f;
}

}  // namespace

Measure shift_measure(const Measure& m, double delta) {
  std::vector<double> c = m.coords();
  for (std::size_t i = 0; i < c.size(); i += m.dim()) c[i] += delta;
  return Measure(m.dim(), std::move(c), m.weights());
}

Flow shift_flow(const Flow& f, double delta) {
  std::vector<Measure> ms;
  for (const Measure& m : f.measures()) ms.push_back(shift_measure(m, delta));
  return Flow(f.times(), std::move(ms));
}

double time_integral(const std::vector<double>& t, const std::vector<double>& v) {
  double s = 0;
  for (std::size_t i = 1; i < t.size(); ++i) s += 0.5 * (t[i] - t[i - 1]) * (v[i] + v[i - 1]);
  return s;
}

Report run_audit(const ExperimentConfig& c) {
  Report r;
  describe(r, c);
  const Model model = Model::load(c.model_path);
  const AuditReport a = lipschitz_audit(model, c.params.audit_samples, c.sim.seed);
  r.summary["model"] = model.name();
  r.summary["audit"] = to_json(a);
  r.checks.push_back(make_check("violations", static_cast<double>(a.violations.size()), 0, 0));
  r.checks.push_back(advisory_check("regularity_hypothesis", a.regularity_hypothesis() ? 1 : 0, 1, 1,
                                    "TV-Lipschitz drift and condition (i) or (ii)"));
  Series s{"audit_ratios", {"index", "ratio"}, {}, false, false};
  json names = json::array();
  std::size_t i = 0;
  for (const auto& [name, value] : a.ratios) {
    s.rows.push_back({static_cast<double>(i++), value});
    names.push_back(name);
  }
  r.summary["ratio_names"] = names;
  r.series.push_back(std::move(s));
  return r;
}

Report run_solve(const ExperimentConfig& c) {
  Report r;
  describe(r, c);
  const Audited a = audited(c, r);
  const Model& model = a.model;
  const ModelConstants& mc = model.constants();
  const Measure g = make_measure(c.gamma1);
  const double t = c.times.back(), s = 0.5 * t;
  const SimConfig sim = c.params.flow_check ? sim_on(c, {s}) : sim_on(c);
  const SolveReport rep = solve_mvsde(model, g, sim, c.params.tol);

  json j = to_json(rep);
  j.erase("nodes");
  r.summary["solve"] = j;
  r.checks.push_back(make_check("residual", rep.residual, 0, c.params.tol));
  double worst = 0, worst_sup = 0;
  for (std::size_t n = 1; n < rep.contraction_history.size(); ++n) {
    worst = std::max(worst, rep.contraction_history[n]);
    worst_sup = std::max(worst_sup, rep.contraction_history_sup[n]);
  }
  r.checks.push_back(make_check("contraction_after_second", worst, 0, 1 - 1e-12,
                                "largest weighted ratio from the third iterate on"));
  r.checks.push_back(advisory_check("contraction_after_second_unweighted", worst_sup, 0, 1 - 1e-12));

  Series moments{"moments", {"t"}, {}, false, false};
  for (std::size_t ax = 0; ax < model.dim(); ++ax) {
    moments.columns.push_back("mean_" + std::to_string(ax));
    moments.columns.push_back("variance_" + std::to_string(ax));
  }
  for (std::size_t i = 0; i < rep.solution.size(); ++i) {
    std::vector<double> row{rep.solution.times()[i]};
    for (std::size_t ax = 0; ax < model.dim(); ++ax) {
      row.push_back(rep.solution.at_node(i).mean(ax));
      row.push_back(rep.solution.at_node(i).variance(ax));
    }
    moments.rows.push_back(std::move(row));
  }
  r.series.push_back(std::move(moments));
  Series outer{"outer", {"iteration", "distance", "sup_distance"}, {}, false, true};
  for (std::size_t n = 0; n < rep.outer_sup_distances.size(); ++n)
    outer.rows.push_back({static_cast<double>(n + 1), rep.outer_distances[n], rep.outer_sup_distances[n]});
  if (!outer.rows.empty()) r.series.push_back(std::move(outer));

  if (c.params.flow_check) {
    SimConfig second = sim;
    second.t0 = s;
    const SolveReport restarted = solve_mvsde(model, rep.solution.at(s), second, c.params.tol);
    SimConfig alt = sim;
    alt.seed = sim.seed ^ 0x9e3779b97f4a7c15ULL;
    const Flow other = psi_map(model, g, rep.solution, rep.solution, alt);
    const double floor = wasserstein(other.at(t), rep.solution.at(t), mc.k).value;
    const double gap = wasserstein(restarted.solution.at(t), rep.solution.at(t), mc.k).value;
    r.summary["flow_check"] = {{"s", s}, {"t", t}, {"wk", gap}, {"wk_noise_floor", floor}};
    r.checks.push_back(make_check("flow_property", gap, 0, 3 * floor, "W_k at t, restarted at t/2"));
  }
  return r;
}

Report run_regularity(const ExperimentConfig& c) {
  Report r;
  describe(r, c);
  const Audited a = audited(c, r);
  if (!a.audit.regularity_hypothesis())
    throw DomainError("refusing regularity run: the audit does not establish a TV-Lipschitz drift together with "
                      "condition (i) or (ii) for model " + a.model.name());
  const ModelConstants& mc = a.model.constants();
  const Measure g1 = make_measure(c.gamma1), g2 = make_measure(*c.gamma2);
  const SimConfig sim = sim_on(c);
  const SolveReport s1 = solve_mvsde(a.model, g1, sim, c.params.tol);
  const SolveReport s2 = to_json(c.gamma1) == to_json(*c.gamma2) ? s1 : solve_mvsde(a.model, g2, sim, c.params.tol);
  const double w0 = wasserstein(g1, g2, mc.k).value;

  Series series{"regularity", {"t", "tv", "wk", "wk_ratio", "tv_sqrt_t"}, {}, true, true};
  std::vector<double> tv, wk;
  for (double t : c.times) {
    const Measure &x = s1.solution.at(t), &y = s2.solution.at(t);
    tv.push_back(tv_between(x, y));
    wk.push_back(wasserstein(x, y, mc.k).value);
    series.rows.push_back({t, tv.back(), wk.back(), w0 > 0 ? wk.back() / w0 : 0.0, tv.back() * std::sqrt(t)});
  }
  r.series.push_back(series);
  r.summary["noise_floor"] = s1.noise_floor;
  r.summary["wk_initial"] = w0;

  if (w0 == 0) {
    double top = 0;
    for (std::size_t i = 0; i < tv.size(); ++i) top = std::max(top, tv[i] + wk[i]);
    r.checks.push_back(make_check("identical_initials", top, 0, std::max(0.0, s1.noise_floor)));
    r.summary["slope_fit"] = "skipped";
    return r;
  }

  std::vector<double> ft, fv;
  const double tmin = c.times.front();
  for (std::size_t i = 0; i < c.times.size(); ++i)
    if (c.times[i] <= c.params.fit_span * tmin * (1 + 1e-12)) {
      ft.push_back(c.times[i]);
      fv.push_back(tv[i]);
    }
  const Fit f = slope(ft, fv, true);
  if (!f.ok) throw DomainError("regularity fit window holds fewer than two usable points");
  r.summary["tv_slope"] = {{"slope", f.line.slope}, {"intercept", f.line.intercept}, {"r2", f.line.r2},
                           {"points", f.line.points}, {"window", {tmin, c.params.fit_span * tmin}}};
  r.checks.push_back(make_check("tv_slope", f.line.slope, c.params.slope_min, c.params.slope_max));

  double cmax = 0, cmin = HUGE_VAL, rmax = 0, rmin = HUGE_VAL;
  for (std::size_t i = 0; i < c.times.size(); ++i) {
    const double k = tv[i] * std::sqrt(c.times[i]);
    cmax = std::max(cmax, k);
    cmin = std::min(cmin, k);
    rmax = std::max(rmax, wk[i] / w0);
    rmin = std::min(rmin, wk[i] / w0);
  }
  r.summary["tv_constant"] = cmax;
  r.summary["wk_constant"] = rmax;
  r.checks.push_back(advisory_check("tv_constant_spread", cmin > 0 ? cmax / cmin : HUGE_VAL, 1, 2,
                                    "TV sqrt(t) across t; a drift near the noise floor is flagged, not asserted"));
  r.checks.push_back(make_check("wk_ratio_spread", rmin > 0 ? rmax / rmin : HUGE_VAL, 1, c.params.wk_ratio_spread));
  return r;
}

Report run_gradient(const ExperimentConfig& c) {
  Report r;
  describe(r, c);
  const Audited a = audited(c, r);
  const std::vector<double>&x = c.gamma1.point, &y = c.gamma2->point;
  double dist = 0, scale = 1;
  for (std::size_t i = 0; i < x.size(); ++i) {
    dist += (x[i] - y[i]) * (x[i] - y[i]);
    scale += std::abs(x[i]) + std::abs(y[i]);
  }
  dist = std::sqrt(dist);
  if (dist > 0 && dist < 1e-8 * scale)
    throw DomainError("refusing gradient run: |x - y| = " + format_number(dist) +
                      " is below the resolvable separation 1e-8 (1 + |x| + |y|)");

  const Measure gx = make_measure(c.gamma1), gy = make_measure(*c.gamma2);
  const SimConfig sim = sim_on(c);
  const SolveReport sol = solve_mvsde(a.model, gx, sim, c.params.tol);
  const Flow px = psi_map(a.model, gx, sol.solution, sol.solution, sim);
  const Flow py = psi_map(a.model, gy, sol.solution, sol.solution, sim);

  Series series{"gradient", {"t", "tv"}, {}, true, true};
  for (double e : c.params.epsilons) series.columns.push_back("w_" + format_number(e));
  std::vector<double> tv;
  std::vector<std::vector<double>> we(c.params.epsilons.size());
  for (double t : c.times) {
    const Measure &u = px.at(t), &v = py.at(t);
    std::vector<double> row{t};
    tv.push_back(tv_between(u, v));
    row.push_back(tv.back());
    for (std::size_t i = 0; i < c.params.epsilons.size(); ++i) {
      we[i].push_back(wasserstein_eta(u, v, c.params.epsilons[i], 100, c.sim.seed).value);
      row.push_back(we[i].back());
    }
    series.rows.push_back(std::move(row));
  }
  r.series.push_back(series);
  r.summary["separation"] = dist;

  if (dist == 0) {
    double top = 0;
    for (double v : tv) top = std::max(top, v);
    for (const auto& w : we)
      for (double v : w) top = std::max(top, v);
    r.checks.push_back(make_check("identical_initials", top, 0, 0));
    r.summary["slope_fit"] = "skipped";
    return r;
  }

  const double tol = c.params.slope_tolerance;
  const Fit ft = slope(c.times, tv, true);
  if (!ft.ok) throw DomainError("gradient fit needs at least two usable points");
  json slopes{{"tv", ft.line.slope}};
  r.checks.push_back(make_check("tv_slope", ft.line.slope, -0.5 - tol, -0.5 + tol));
  for (std::size_t i = 0; i < c.params.epsilons.size(); ++i) {
    const double e = c.params.epsilons[i], ceiling = (-1 + e) / 2;
    const Fit fw = slope(c.times, we[i], true);
    if (!fw.ok) throw DomainError("gradient fit needs at least two usable points");
    slopes["w_" + format_number(e)] = fw.line.slope;
    const double upper = e == 1.0 ? ceiling + tol : HUGE_VAL;
    r.checks.push_back(make_check("w_" + format_number(e) + "_slope", fw.line.slope, ceiling - tol, upper,
                                  "ceiling (-1+eps)/2"));
  }
  r.summary["slopes"] = slopes;
  return r;
}

Report run_stability(const ExperimentConfig& c) {
  Report r;
  describe(r, c);
  const Audited a = audited(c, r);
  const Model& model = a.model;
  const ModelConstants& mc = model.constants();
  const Measure g = make_measure(c.gamma1);
  const SimConfig sim = sim_on(c);
  const SolveReport sol = solve_mvsde(model, g, sim, c.params.tol);
  const Flow mu = plain(sol.solution), nu = mu;
  const Flow base = psi_map(model, g, mu, nu, sim);
  const FlowMetricOptions mopt;

  auto response = [&](const Flow& law) {
    double top = 0;
    for (double t : base.times()) top = std::max(top, wasserstein(base.at(t), law.at(t), mc.k).value);
    return top;
  };
  r.checks.push_back(make_check("unperturbed", response(psi_map(model, g, mu, nu, sim)), 0, 0));

  json fits = json::object();
  for (const std::string& driver : c.params.drivers) {
    const bool inert = (driver == "diffusion" && model.sigma_distribution_free()) ||
                       (driver == "drift" && model.drift_distribution_free());
    if (inert) {
      fits[driver] = "not applicable: the coefficient ignores the measure";
      continue;
    }
    Series s{"stability_" + driver, {"delta", "driver", "response", "response_over_driver"}, {}, true, true};
    std::vector<double> deltas, resp;
    for (double d : c.params.deltas) {
      double drive = 0;
      Flow law;
      if (driver == "initial") {
        const Measure g2 = shift_measure(g, d);
        drive = wasserstein(g, g2, mc.k).value;
        law = psi_map(model, g2, mu, nu, sim);
      } else if (driver == "diffusion") {
        const Flow nu2 = shift_flow(nu, d);
        const FlowDistances fd = flow_distances_eta(nu, nu2, mc.k, mc.eta, mopt);
        std::vector<double> sq;
        for (std::size_t i = 0; i < fd.times.size(); ++i) sq.push_back(std::pow(fd.first[i] + fd.second[i], 2));
        drive = std::sqrt(time_integral(fd.times, sq));
        law = psi_map(model, g, mu, nu2, sim);
      } else {
        const Flow mu2 = shift_flow(mu, d);
        const FlowDistances fd = flow_distances_var(mu, mu2, mc.k, mopt);
        std::vector<double> sum;
        for (std::size_t i = 0; i < fd.times.size(); ++i) sum.push_back(fd.first[i] + fd.second[i]);
        drive = time_integral(fd.times, sum);
        law = psi_map(model, g, mu2, nu, sim);
      }
      const double v = response(law);
      deltas.push_back(d);
      resp.push_back(v);
      s.rows.push_back({d, drive, v, drive > 0 ? v / drive : 0.0});
    }
    r.series.push_back(s);
    const Fit f = slope(deltas, resp, false);
    if (!f.ok) {
      r.checks.push_back(make_check(driver + "_slope", HUGE_VAL, 1 - c.params.linear_tolerance,
                                    1 + c.params.linear_tolerance, "no positive responses"));
      continue;
    }
    fits[driver] = {{"slope", f.line.slope}, {"r2", f.line.r2}, {"constant", std::exp(f.line.intercept)}};
    r.checks.push_back(make_check(driver + "_slope", f.line.slope, 1 - c.params.linear_tolerance,
                                  1 + c.params.linear_tolerance, "log-log slope of the response against delta"));
  }
  r.summary["fits"] = fits;
  return r;
}

Report run_duhamel_validation(const ExperimentConfig& c) {
  Report r;
  describe(r, c);
  const Audited a = audited(c, r);
  const Model& model = a.model;
  const double x0 = c.gamma1.point.front();
  const Measure g = make_measure(c.gamma1);
  const SimConfig sim = sim_on(c, c.params.horizons);
  const SolveReport sol = solve_mvsde(model, g, sim, c.params.tol);
  DuhamelOptions opt;
  opt.cells = c.params.cells;

  json rows = json::array();
  for (std::size_t k = 0; k < c.params.horizons.size(); ++k) {
    const double t = c.params.horizons[k];
    const DuhamelGrid grid = solve_density(model, sol.solution, sol.solution, x0, 0.0, t, opt);
    const std::size_t last = grid.p.size() - 1;
    const double tv = variation_against_samples(grid, last, sol.solution.at(t));
    const std::string tag = std::to_string(k);
    json row = summary_json(grid);
    row["horizon"] = t;
    row["tv_monte_carlo"] = tv;
    r.checks.push_back(make_check("tv_monte_carlo_" + tag, tv, 0, c.params.tv_tolerance,
                                  "horizon " + format_number(t)));

    Series dens{"density_" + tag, {"x", "p"}, {}, false, false};
    std::vector<double> exact;
    if (c.params.closed_form) {
      const double m = x0 + c.params.closed_form->drift * t;
      const double sd = c.params.closed_form->diffusion * std::sqrt(t);
      double gap = 0, mass = 0;
      for (std::size_t i = 0; i < grid.cells; ++i) {
        const double lo = grid.lo + i * grid.h;
        const double q = (normal_cdf((lo + grid.h - m) / sd) - normal_cdf((lo - m) / sd)) / grid.h;
        exact.push_back(q);
        gap += std::abs(grid.p[last][i] - q) * grid.h;
        mass += q * grid.h;
      }
      gap += std::max(0.0, 1 - mass);
      row["tv_closed_form"] = gap;
      r.checks.push_back(make_check("tv_closed_form_" + tag, gap, 0, c.params.tv_tolerance,
                                    "horizon " + format_number(t)));
      dens.columns.push_back("closed_form");
    }
    for (std::size_t i = 0; i < grid.cells; ++i) {
      std::vector<double> v{grid.center(i), grid.p[last][i]};
      if (!exact.empty()) v.push_back(exact[i]);
      dens.rows.push_back(std::move(v));
    }
    Series res{"residuals_" + tag, {"iteration", "residual"}, {}, false, true};
    for (std::size_t i = 0; i < grid.residuals.size(); ++i)
      res.rows.push_back({static_cast<double>(i + 1), grid.residuals[i]});
    r.series.push_back(std::move(dens));
    r.series.push_back(std::move(res));
    rows.push_back(row);
  }
  r.summary["horizons"] = rows;
  return r;
}

Report run_experiment(const ExperimentConfig& c) {
  switch (c.kind) {
    case ExperimentKind::regularity: return run_regularity(c);
    case ExperimentKind::gradient: return run_gradient(c);
    case ExperimentKind::stability: return run_stability(c);
    case ExperimentKind::duhamel: return run_duhamel_validation(c);
    case ExperimentKind::solve: return run_solve(c);
    case ExperimentKind::audit: return run_audit(c);
  }
  throw DomainError("unknown experiment kind");
}

}  // namespace mvsde
