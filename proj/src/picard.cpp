#include "rmlp/picard.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

#include "rmlp/errors.hpp"

namespace rmlp {

PicardGrid default_picard_grid(double horizon) {
  PicardGrid g;
  g.times = {0.0, 0.25 * horizon, 0.5 * horizon, 0.75 * horizon, 0.95 * horizon};
  for (int i = 0; i <= 10; ++i) g.states.push_back(0.2 * i);
  return g;
}

namespace {

constexpr std::int64_t kPicardTag = 7;

struct Table {
  int d = 0;
  const PicardGrid* grid = nullptr;
  double horizon = 0.0;
  std::vector<double> value;  // [time][state]
  std::vector<double> grad;   // [time][state][j]

  std::size_t states_per_time() const {
    std::size_t n = 1;
    for (int a = 0; a < d; ++a) n *= grid->states.size();
    return n;
  }

  // Locates s in nodes with clamping; returns the lower index and weight of the upper node.
  static std::pair<std::size_t, double> locate(const std::vector<double>& nodes, double s) {
    if (nodes.size() == 1 || s <= nodes.front()) return {0, 0.0};
    if (s >= nodes.back()) return {nodes.size() - 2, 1.0};
    const auto it = std::upper_bound(nodes.begin(), nodes.end(), s);
    const std::size_t i = static_cast<std::size_t>(it - nodes.begin()) - 1;
    return {i, (s - nodes[i]) / (nodes[i + 1] - nodes[i])};
  }

  // Multilinear interpolation of the gradient table at time index ti.
  void spatial(std::size_t ti, const double* z, double* out) const {
    std::fill(out, out + d, 0.0);
    const std::size_t ns = grid->states.size();
    std::size_t lo[2] = {0, 0};
    double wt[2] = {0.0, 0.0};
    for (int a = 0; a < d; ++a) std::tie(lo[a], wt[a]) = locate(grid->states, z[a]);
    const int corners = 1 << d;
    for (int c = 0; c < corners; ++c) {
      double w = 1.0;
      std::size_t idx = 0;
      for (int a = 0; a < d; ++a) {
        const bool up = (c >> a) & 1;
        w *= up ? wt[a] : 1.0 - wt[a];
        const std::size_t node = std::min(lo[a] + (up ? 1 : 0), ns - 1);
        idx = idx * ns + node;
      }
      if (w == 0.0) continue;
      const double* g = grad.data() + (ti * states_per_time() + idx) * static_cast<std::size_t>(d);
      for (int j = 0; j < d; ++j) out[j] += w * g[j];
    }
  }

  void interpolate(double s, const double* z, double* out, double* tmp) const {
    const auto& times = grid->times;
    if (s <= times.front()) {
      spatial(0, z, out);
      return;
    }
    if (s >= times.back()) {
      // linear decay to v(T, .) = 0
      spatial(times.size() - 1, z, out);
      const double frac = std::clamp((horizon - s) / (horizon - times.back()), 0.0, 1.0);
      for (int j = 0; j < d; ++j) out[j] *= frac;
      return;
    }
    const auto [i, w] = locate(times, s);
    spatial(i, z, out);
    spatial(i + 1, z, tmp);
    for (int j = 0; j < d; ++j) out[j] = (1.0 - w) * out[j] + w * tmp[j];
  }
};

}  // namespace

PicardResult picard_reference_iteration(const ProblemSpec& spec, const ReferenceProcess& ref, double t, const Vec& x,
                                        int n_iter, std::uint64_t mc_budget, std::uint64_t seed,
                                        const PicardGrid& grid, int workers) {
  if (spec.dim > 2) throw unsupported_configuration("picard diagnostic supports d <= 2 only");
  if (n_iter < 1 || mc_budget < 1) throw invalid_argument("picard: need n_iter >= 1 and mc_budget >= 1");
  if (grid.times.empty() || grid.states.empty()) throw invalid_argument("picard: empty grid");
  if (!std::is_sorted(grid.times.begin(), grid.times.end()) || grid.times.back() >= spec.horizon)
    throw invalid_argument("picard: grid times must be increasing and below T");
  if (!(t >= 0.0 && t < spec.horizon) || x.size() != spec.dim || !(x.array() >= 0.0).all())
    throw invalid_argument("picard: (t, x) must lie in [0, T) x orthant");

  MlpConfig cfg;
  cfg.level = 1;
  cfg.branch_base = 1;
  cfg.replicates = 1;
  cfg.backend = ref.backend;
  const MlpProblem P(spec, ref, cfg);
  const ControlOperator control(spec);
  const int d = spec.dim;
  const RngKey root = RngKey::root(seed, 0);

  Table prev;
  prev.d = d;
  prev.grid = &grid;
  prev.horizon = spec.horizon;
  const std::size_t per_time = prev.states_per_time();
  const std::size_t nodes = grid.times.size() * per_time;
  prev.value.assign(nodes, 0.0);
  prev.grad.assign(nodes * static_cast<std::size_t>(d), 0.0);

  auto node_point = [&](std::size_t n, double& tn, double* xn) {
    tn = grid.times[n / per_time];
    std::size_t rem = n % per_time;
    for (int a = d - 1; a >= 0; --a) {
      xn[a] = grid.states[rem % grid.states.size()];
      rem /= grid.states.size();
    }
  };

  // Monte Carlo of the map at (tn, xn) with v taken from `table`.
  auto apply_map = [&](const Table& table, std::int64_t node_id, double tn, const double* xn, double& value,
                       double* grad) {
    std::vector<double> z(static_cast<std::size_t>(d)), w(z), p(z), tmp(z), drift(z), extra(z);
    const double C = normalizing_constant(spec.discount, spec.horizon - tn);
    const RngKey key = root.child(node_id, 0, kPicardTag);
    double sv = 0.0;
    std::vector<double> sg(static_cast<std::size_t>(d), 0.0);
    for (std::uint64_t m = 0; m < mc_budget; ++m) {
      RngStream rng(key, m);
      double ev = 0.0;
      std::fill(extra.begin(), extra.end(), 0.0);
      const double s = P.draw(rng, tn, xn, z.data(), w.data(), &ev, extra.data());
      table.interpolate(s, z.data(), p.data(), tmp.data());
      ref.drift(z.data(), drift.data());
      double ham = control.bar(p.data());
      for (int i = 0; i < d; ++i) ham += (spec.drift_base(i) - drift[i]) * p[i] + spec.holding_cost(i) * z[i];
      sv += C * std::sqrt(std::max(s - tn, kMinElapsed)) * ham + ev;
      for (int j = 0; j < d; ++j) sg[j] += C * ham * w[j] + extra[j];
    }
    value = sv / static_cast<double>(mc_budget);
    for (int j = 0; j < d; ++j) grad[j] = sg[j] / static_cast<double>(mc_budget);
  };

  const WeightFn wfn = WeightFn::make(std::max(d, 2));
  PicardResult result;
  const int threads = workers > 0 ? workers : omp_get_max_threads();
  for (int k = 1; k <= n_iter; ++k) {
    Table next = prev;
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
    for (std::int64_t n = 0; n < static_cast<std::int64_t>(nodes); ++n) {
      double tn;
      double xn[2];
      node_point(static_cast<std::size_t>(n), tn, xn);
      apply_map(prev, n, tn, xn, next.value[static_cast<std::size_t>(n)],
                next.grad.data() + static_cast<std::size_t>(n) * static_cast<std::size_t>(d));
    }

    PicardIterate it;
    it.k = k;
    it.gradient = Vec::Zero(d);
    apply_map(prev, -1, t, x.data(), it.value, it.gradient.data());
    for (std::size_t n = 0; n < nodes; ++n) {
      double tn;
      double xn[2];
      node_point(n, tn, xn);
      const double wx = weight(wfn, Eigen::Map<const Vec>(xn, d));
      double gmax = 0.0;
      for (int j = 0; j < d; ++j) {
        const std::size_t idx = n * static_cast<std::size_t>(d) + static_cast<std::size_t>(j);
        gmax = std::max(gmax, std::fabs(next.grad[idx] - prev.grad[idx]));
      }
      it.diff_norm = std::max(it.diff_norm, std::sqrt(spec.horizon - tn) * gmax / wx);
      it.value_diff_norm = std::max(it.value_diff_norm, std::fabs(next.value[n] - prev.value[n]) / wx);
    }
    result.iterates.push_back(it);
    prev = std::move(next);
  }
  result.ratios.assign(result.iterates.size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 1; i < result.iterates.size(); ++i)
    if (result.iterates[i - 1].diff_norm > 0.0)
      result.ratios[i] = result.iterates[i].diff_norm / result.iterates[i - 1].diff_norm;
  return result;
}

}  // namespace rmlp
