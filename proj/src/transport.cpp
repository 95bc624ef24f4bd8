#include "mvsde/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mvsde/errors.hpp"

namespace mvsde {

namespace {

constexpr std::size_t kNone = static_cast<std::size_t>(-1);

struct Basis {
  std::size_t n, m;
  std::vector<std::size_t> ci, cj;  // basic cells
  std::vector<double> flow;
  std::vector<char> alive;
  // node ids: rows 0..n-1, cols n..n+m-1
  std::vector<std::vector<std::size_t>> adj;

  void add(std::size_t i, std::size_t j, double f) {
    const std::size_t id = ci.size();
    ci.push_back(i);
    cj.push_back(j);
    flow.push_back(f);
    alive.push_back(1);
    adj[i].push_back(id);
    adj[n + j].push_back(id);
  }
  void remove(std::size_t id) {
    alive[id] = 0;
    for (std::size_t node : {ci[id], n + cj[id]}) {
      auto& a = adj[node];
      a.erase(std::find(a.begin(), a.end(), id));
    }
  }
  std::size_t other(std::size_t id, std::size_t node) const {
    return node < n ? n + cj[id] : ci[id];
  }
};

}  // namespace

TransportSolution solve_transport(std::span<const double> supply, std::span<const double> demand,
                                  std::span<const double> cost) {
  const std::size_t n = supply.size(), m = demand.size();
  if (n == 0 || m == 0) throw DomainError("transport problem needs nonempty marginals");
  if (cost.size() != n * m) throw DomainError("cost matrix has the wrong size");
  double sa = 0, sb = 0, cmax = 0;
  for (double a : supply) sa += a;
  for (double b : demand) sb += b;
  for (double c : cost) {
    if (!std::isfinite(c)) throw NumericError("non-finite transport cost");
    cmax = std::max(cmax, std::abs(c));
  }
  if (std::abs(sa - sb) > 1e-9 * std::max(1.0, sa))
    throw DomainError("transport marginals have different mass");

  Basis B{n, m, {}, {}, {}, {}, std::vector<std::vector<std::size_t>>(n + m)};
  {
    std::vector<double> ra(supply.begin(), supply.end()), rb(demand.begin(), demand.end());
    std::size_t i = 0, j = 0;
    while (true) {
      const double q = std::max(0.0, std::min(ra[i], rb[j]));
      B.add(i, j, q);
      ra[i] -= q;
      rb[j] -= q;
      if (i == n - 1 && j == m - 1) break;
      if (i == n - 1)
        ++j;
      else if (j == m - 1)
        ++i;
      else if (ra[i] <= rb[j])
        ++i;
      else
        ++j;
    }
  }

  const double tol = 1e-13 * std::max(1.0, cmax);
  std::vector<double> pot(n + m);
  std::vector<char> seen(n + m);
  std::vector<std::size_t> stack, parent_edge(n + m);
  auto potentials = [&] {
    std::fill(seen.begin(), seen.end(), 0);
    pot[0] = 0;
    seen[0] = 1;
    stack.assign(1, 0);
    while (!stack.empty()) {
      const std::size_t node = stack.back();
      stack.pop_back();
      for (std::size_t id : B.adj[node]) {
        const std::size_t o = B.other(id, node);
        if (seen[o]) continue;
        seen[o] = 1;
        const double c = cost[B.ci[id] * m + B.cj[id]];
        pot[o] = c - pot[node];  // u_i + v_j = c_ij
        stack.push_back(o);
      }
    }
  };

  TransportSolution sol;
  const std::size_t max_pivots = 50 * (n + m) * (n + m) + 1000;
  std::size_t degenerate_run = 0;
  bool bland = false;
  std::vector<std::size_t> path;
  while (true) {
    potentials();
    std::size_t ei = kNone, ej = kNone;
    double best = -tol;
    for (std::size_t i = 0; i < n && !(bland && ei != kNone); ++i)
      for (std::size_t j = 0; j < m; ++j) {
        const double d = cost[i * m + j] - pot[i] - pot[n + j];
        if (d < best) {
          best = d;
          ei = i;
          ej = j;
          if (bland) break;
        }
      }
    if (ei == kNone) break;
    if (++sol.pivots > max_pivots) throw ConvergenceError("transport simplex exceeded pivot budget");

    // Tree path from column ej to row ei.
    std::fill(seen.begin(), seen.end(), 0);
    const std::size_t src = n + ej, dst = ei;
    seen[src] = 1;
    stack.assign(1, src);
    while (!stack.empty() && !seen[dst]) {
      const std::size_t node = stack.back();
      stack.pop_back();
      for (std::size_t id : B.adj[node]) {
        const std::size_t o = B.other(id, node);
        if (seen[o]) continue;
        seen[o] = 1;
        parent_edge[o] = id;
        stack.push_back(o);
      }
    }
    path.clear();
    for (std::size_t node = dst; node != src;) {
      const std::size_t id = parent_edge[node];
      path.push_back(id);
      node = B.other(id, node);
    }
    std::reverse(path.begin(), path.end());  // path[0] touches column ej
    // Signs along the cycle: entering +, then path edges -, +, -, ...
    double theta = std::numeric_limits<double>::infinity();
    std::size_t leave = kNone;
    for (std::size_t p = 0; p < path.size(); p += 2) {
      const std::size_t id = path[p];
      if (B.flow[id] < theta || (B.flow[id] == theta && bland && id < leave)) {
        theta = B.flow[id];
        leave = id;
      }
    }
    for (std::size_t p = 0; p < path.size(); ++p) B.flow[path[p]] += (p % 2 == 0 ? -theta : theta);
    B.flow[leave] = 0;
    B.remove(leave);
    B.add(ei, ej, theta);
    if (theta <= 0) {
      if (++degenerate_run > 4 * (n + m)) bland = true;
    } else {
      degenerate_run = 0;
      bland = false;
    }
  }

  potentials();
  sol.u.assign(pot.begin(), pot.begin() + n);
  sol.v.assign(pot.begin() + n, pot.end());
  sol.min_reduced_cost = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j)
      sol.min_reduced_cost = std::min(sol.min_reduced_cost, cost[i * m + j] - sol.u[i] - sol.v[j]);
  for (std::size_t id = 0; id < B.ci.size(); ++id) {
    if (!B.alive[id]) continue;
    const double f = std::max(0.0, B.flow[id]);
    sol.primal += f * cost[B.ci[id] * m + B.cj[id]];
    if (f > 0) sol.plan.push_back({B.ci[id], B.cj[id], f});
  }
  for (std::size_t i = 0; i < n; ++i) sol.dual += supply[i] * sol.u[i];
  for (std::size_t j = 0; j < m; ++j) sol.dual += demand[j] * sol.v[j];
  return sol;
}

}  // namespace mvsde
