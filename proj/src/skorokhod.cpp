#include "rmlp/skorokhod.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rmlp/errors.hpp"

namespace rmlp {

std::pair<std::vector<double>, std::vector<double>> skorokhod_map_1d(const std::vector<double>& f) {
  if (f.empty()) return {};
  if (!(f[0] >= 0.0)) throw invalid_argument("skorokhod_map_1d: path must start in [0, inf)");
  std::vector<double> h(f.size()), g(f.size());
  double run = 0.0;
  for (std::size_t k = 0; k < f.size(); ++k) {
    run = std::max(run, -f[k]);
    g[k] = run;
    h[k] = f[k] + run;
  }
  return {h, g};
}

DiscretePath skorokhod_map_orthant(const std::vector<Vec>& free_path, const Mat& reflection,
                                   const std::vector<double>& times) {
  DiscretePath out;
  if (free_path.empty()) return out;
  const Eigen::Index d = free_path[0].size();
  if (reflection.rows() != d || reflection.cols() != d)
    throw invalid_argument("skorokhod_map_orthant: reflection matrix has the wrong size");
  if (!times.empty() && times.size() != free_path.size())
    throw invalid_argument("skorokhod_map_orthant: times and path lengths differ");
  if (!(free_path[0].array() >= 0.0).all())
    throw invalid_argument("skorokhod_map_orthant: path must start in the orthant");
  out.times = times;
  out.states.reserve(free_path.size());
  out.regulator.reserve(free_path.size());

  const Mat qt = (Mat::Identity(d, d) - reflection);  // Q^T
  const bool normal = qt.isZero(0.0);
  constexpr double tol = 1e-12;
  constexpr int max_iter = 10000;

  Vec g = Vec::Zero(d);
  for (const Vec& f : free_path) {
    if (f.size() != d) throw invalid_argument("skorokhod_map_orthant: ragged path");
    if (normal) {
      g = g.cwiseMax(-f);
    } else {
      const Vec floor = g;
      int it = 0;
      for (;; ++it) {
        if (it == max_iter) throw numerical_failure("skorokhod_map_orthant: fixed point did not converge");
        const Vec next = floor.cwiseMax(-f + qt * g);
        const double change = (next - g).cwiseAbs().maxCoeff();
        g = next;
        if (change <= tol) break;
      }
    }
    out.states.push_back(f + reflection * g);
    out.regulator.push_back(g);
  }
  return out;
}

EulerStep euler_reference_step(const Vec& state, const DerivativeState& deriv, const Vec& btilde,
                               const Mat& jacobian_btilde, const Mat& sigma, const Vec& dW, double dt) {
  if (!(dt > 0.0)) throw invalid_argument("euler_reference_step: dt must be positive");
  const Eigen::Index d = state.size();
  EulerStep out;
  const Vec free = state + btilde * dt + sigma * dW;
  out.dY = (-free).cwiseMax(0.0);
  out.state = free + out.dY;
  out.deriv.matrix = deriv.matrix + jacobian_btilde * deriv.matrix * dt;
  out.deriv.alive.assign(static_cast<std::size_t>(d), true);
  for (Eigen::Index i = 0; i < d; ++i) {
    if (out.state(i) == 0.0) {
      out.deriv.matrix.row(i).setZero();
      out.deriv.alive[static_cast<std::size_t>(i)] = false;
    }
  }
  return out;
}

std::vector<WeightedSample> simulate_weighted_path(RngStream& rng, const ReferenceProcess& ref,
                                                   const ProblemSpec& spec, double t, const Vec& x,
                                                   const std::vector<double>& s_targets,
                                                   const PathOptions& options) {
  if (options.steps_per_interval < 1) throw invalid_argument("simulate_weighted_path: steps_per_interval must be >= 1");
  if (!spec.normal_reflection())
    throw unsupported_configuration("simulate_weighted_path: derivative process needs R = I");
  const int d = spec.dim;
  if (x.size() != d || !(x.array() >= 0.0).all()) throw invalid_argument("simulate_weighted_path: x must lie in the orthant");
  double prev = t;
  for (double s : s_targets) {
    if (!(s > prev) || s > spec.horizon + 1e-12)
      throw invalid_argument("simulate_weighted_path: targets must be sorted in (t, T]");
    prev = s;
  }

  const Mat sigma_inv = spec.sigma.inverse();
  const Vec var = (spec.sigma * spec.sigma.transpose()).diagonal();
  const Vec& kappa = spec.pushing_penalty;
  const bool with_push = !spec.pushing_is_zero();
  const double beta = spec.discount;

  Vec state = x;
  Mat deriv = Mat::Identity(d, d);
  Mat pre(d, d);
  Vec b(d), free(d), dW(d), v_acc = Vec::Zero(d), p_acc = Vec::Zero(d);
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> jac(d, d);
  double push = 0.0;

  std::vector<WeightedSample> out;
  out.reserve(s_targets.size());
  prev = t;
  for (double s : s_targets) {
    const double dt = (s - prev) / options.steps_per_interval;
    const double sq = std::sqrt(dt);
    for (int k = 0; k < options.steps_per_interval; ++k) {
      const double r_next = prev + (k + 1) * dt;
      ref.drift(state.data(), b.data());
      for (int i = 0; i < d; ++i) dW(i) = sq * rng.normal();
      free = state + b * dt + spec.sigma * dW;
      if (ref.constant) {
        pre = deriv;
      } else {
        ref.jacobian(state.data(), jac.data());
        pre = deriv + jac * deriv * dt;
      }
      v_acc.noalias() += (sigma_inv * deriv).transpose() * dW;
      const double disc = beta == 0.0 ? 1.0 : std::exp(-beta * (r_next - t));
      for (int i = 0; i < d; ++i) {
        double y;
        if (options.rule == ReflectionRule::projection) {
          y = std::max(0.0, -free(i));
        } else {
          const double a = state(i), e = free(i);
          const double m = 0.5 * (a + e - std::sqrt((a - e) * (a - e) - 2.0 * var(i) * dt * std::log(rng.uniform())));
          y = std::max(0.0, -m);
        }
        state(i) = free(i) + y;
        if (y > 0.0 || state(i) == 0.0) {
          if (with_push && y > 0.0) {
            push += disc * kappa(i) * y;
            p_acc -= disc * kappa(i) * pre.row(i).transpose();
          }
          pre.row(i).setZero();
        }
      }
      deriv = pre;
    }
    WeightedSample w;
    w.s = s;
    w.z = state;
    w.v = v_acc / std::sqrt(std::max(s - t, kMinElapsed));
    w.pushing = push;
    w.p = p_acc;
    out.push_back(std::move(w));
    prev = s;
  }
  return out;
}

EulerTupleSampler::EulerTupleSampler(const ProblemSpec& spec, const ReferenceProcess& ref, PathOptions options)
    : spec_(&spec), ref_(&ref), options_(options) {
  if (!spec.normal_reflection())
    throw unsupported_configuration("euler backend: derivative process needs R = I");
  if (ref.dim != spec.dim) throw invalid_argument("euler backend: reference and problem dimensions differ");
  needs_terminal_ = !spec.terminal_cost.is_zero() || !spec.pushing_is_zero();
}

SampleTuple EulerTupleSampler::draw(RngStream& rng, double t, const Vec& x) const {
  SampleTuple out;
  out.s = sample_random_time(rng, t, spec_->horizon, spec_->discount);
  std::vector<double> targets{out.s};
  if (needs_terminal_ && out.s < spec_->horizon) targets.push_back(spec_->horizon);
  const auto path = simulate_weighted_path(rng, *ref_, *spec_, t, x, targets, options_);
  out.z_s = path[0].z;
  out.v_s = path[0].v;
  if (needs_terminal_) {
    const WeightedSample& end = path.back();
    out.has_terminal = true;
    out.z_T = end.z;
    out.v_T = end.v;
    out.has_pushing = true;
    out.pushing = end.pushing;
    out.p_T = end.p;
  }
  return out;
}

}  // namespace rmlp
