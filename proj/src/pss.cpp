#include "rmlp/pss.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "rmlp/errors.hpp"

namespace rmlp {

OpenChainSpec build_open_chain(int d, double ca, const Vec& h, double T) {
  if (d < 2) throw invalid_argument("build_open_chain: d must be at least 2");
  if (h.size() != d) throw invalid_argument("build_open_chain: h must have d entries");
  if (!(ca >= 0.0)) throw invalid_argument("build_open_chain: C_A must be nonnegative");
  if (!(T > 0.0)) throw invalid_argument("build_open_chain: T must be positive");

  OpenChainSpec oc;
  oc.dim = d;
  oc.action_bound = ca;
  oc.holding_cost = h;
  oc.horizon = T;

  ProblemSpec& p = oc.problem;
  p.dim = d;
  p.control_dim = d - 1;
  p.horizon = T;
  p.discount = 0.0;
  p.sigma = Mat::Identity(d, d);
  p.reflection = Mat::Identity(d, d);
  p.drift_base = Vec::Constant(d, -1.0);
  p.control_matrix = Mat::Zero(d, d - 1);
  for (int k = 0; k < d - 1; ++k) {
    p.control_matrix(k, k) = 1.0;
    p.control_matrix(k + 1, k) = -1.0;
  }
  p.action_bound = ca;
  p.holding_cost = h;
  p.pushing_penalty = Vec::Zero(d);
  p.terminal_cost = TerminalCost::zero();
  p.validate();
  return oc;
}

bool lc_optimality_check(const Vec& h) {
  for (Eigen::Index i = 1; i < h.size(); ++i)
    if (h(i) > h(i - 1)) return false;
  return true;
}

LeastControlPath least_control_path(RngStream& rng, const OpenChainSpec& spec, double t, const Vec& x, double dt,
                                    MinimumRule rule, bool keep_path) {
  const ProblemSpec& p = spec.problem;
  const int d = p.dim;
  const double span = p.horizon - t;
  const long n = std::max(1L, std::lround(span / dt));
  const double h_step = span / static_cast<double>(n);
  const double sq = std::sqrt(h_step);
  const double beta = p.discount;

  LeastControlPath out;
  Vec z = x;
  Vec y = Vec::Zero(d);
  if (keep_path) {
    out.states.reserve(static_cast<std::size_t>(n + 1));
    out.states.push_back(z);
    out.regulator.push_back(y);
  }
  double prev_cost = p.holding_cost.dot(z);
  double integral = 0.0;
  for (long k = 1; k <= n; ++k) {
    double push_prev = 0.0;
    for (int i = 0; i < d; ++i) {
      const double w = p.drift_base(i) * h_step + p.sigma(i, i) * sq * rng.normal();
      const double a = z(i);
      const double end = a + w - push_prev;
      double m = end;
      if (rule == MinimumRule::bridge) {
        const double var = p.sigma(i, i) * p.sigma(i, i) * h_step;
        const double bridge_min = 0.5 * (2.0 * a + w - std::sqrt(w * w - 2.0 * var * std::log(rng.uniform())));
        m = std::min(bridge_min, end);
      }
      const double push = std::max(0.0, -m);
      z(i) = end + push;
      y(i) += push;
      push_prev = push;
    }
    const double cost = p.holding_cost.dot(z);
    const double disc = beta == 0.0 ? 1.0 : std::exp(-beta * (k - 0.5) * h_step);
    integral += disc * 0.5 * (prev_cost + cost) * h_step;
    prev_cost = cost;
    if (keep_path) {
      out.states.push_back(z);
      out.regulator.push_back(y);
    }
  }
  out.cost = integral;
  return out;
}

BaselineResult least_control_cost(const RngKey& key, const OpenChainSpec& spec, double t, const Vec& x, double dt,
                                  long n_paths, MinimumRule rule) {
  if (!(dt > 0.0)) throw invalid_argument("least_control_cost: dt must be positive");
  if (n_paths < 2) throw invalid_argument("least_control_cost: need at least two paths");
  if (x.size() != spec.dim || !(x.array() >= 0.0).all()) throw invalid_argument("least_control_cost: x must lie in the orthant");
  if (!(t >= 0.0 && t < spec.horizon)) throw invalid_argument("least_control_cost: need 0 <= t < T");

  std::vector<double> costs(static_cast<std::size_t>(n_paths));
#pragma omp parallel for schedule(dynamic, 16)
  for (long p = 0; p < n_paths; ++p) {
    RngStream rng(key, static_cast<u64>(p));
    costs[static_cast<std::size_t>(p)] = least_control_path(rng, spec, t, x, dt, rule, false).cost;
  }
  double sum = 0.0;
  for (double c : costs) sum += c;
  const double mean = sum / static_cast<double>(n_paths);
  double ss = 0.0;
  for (double c : costs) ss += (c - mean) * (c - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n_paths - 1));
  return {mean, sd / std::sqrt(static_cast<double>(n_paths)), n_paths, dt};
}

ReferenceProcess switching_curve_reference(double ca, const Vec& base, int steps) {
  if (base.size() != 2) throw invalid_argument("switching_curve_reference: only defined for d = 2");
  if (steps < 1) throw invalid_argument("switching_curve_reference: steps must be positive");
  ReferenceProcess r;
  r.name = "switching-curve";
  r.dim = 2;
  r.backend = Backend::euler(steps);
  r.constant = false;
  const double b0 = base(0), b1 = base(1);
  r.drift_fn = [ca, b0, b1](const double* x, double* out) {
    const double a = 0.5 * ca * (std::tanh(2.0 * x[1] - x[0]) + 1.0);
    out[0] = b0 + a;
    out[1] = b1 - a;
  };
  r.jacobian_fn = [ca](const double* x, double* out) {
    const double c = std::cosh(2.0 * x[1] - x[0]);
    const double k = 0.5 * ca / (c * c);
    out[0] = -k;
    out[1] = 2.0 * k;
    out[2] = k;
    out[3] = -2.0 * k;
  };
  return r;
}

std::vector<PolicyCell> policy_grid(const std::vector<GridEstimate>& estimates, const ProblemSpec& spec) {
  if (spec.dim != 2) throw invalid_argument("policy_grid: only defined for d = 2");
  std::vector<PolicyCell> cells;
  cells.reserve(estimates.size());
  for (const auto& e : estimates) {
    if (e.state.size() != 2) throw invalid_argument("policy_grid: states must be 2-vectors");
    PolicyCell c;
    c.x1 = e.state(0);
    c.x2 = e.state(1);
    if (e.gradient) {
      c.present = true;
      c.d1 = (*e.gradient)(0);
      c.d2 = (*e.gradient)(1);
      c.diff = c.d1 - c.d2;
      c.label = c.diff <= 0.0 ? "+" : "x";
    } else {
      c.label = "absent";
    }
    cells.push_back(c);
  }
  return cells;
}

int switching_violations(const std::vector<PolicyCell>& cells) {
  std::map<double, std::vector<std::pair<double, bool>>> columns;
  for (const auto& c : cells)
    if (c.present) columns[c.x1].push_back({c.x2, c.label == "+"});
  int total = 0;
  for (auto& [x1, col] : columns) {
    std::sort(col.begin(), col.end());
    const int n = static_cast<int>(col.size());
    int best = n;
    // threshold k: rows [0, k) should be idle, rows [k, n) serve.
    for (int k = 0; k <= n; ++k) {
      int bad = 0;
      for (int r = 0; r < n; ++r) bad += (r < k) == col[r].second;
      best = std::min(best, bad);
    }
    total += best;
  }
  return total;
}

}  // namespace rmlp
