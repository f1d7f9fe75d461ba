#pragma once

#include <utility>
#include <vector>

#include "rmlp/exact_sampler.hpp"
#include "rmlp/problem.hpp"
#include "rmlp/reference.hpp"
#include "rmlp/rng.hpp"

namespace rmlp {

struct DiscretePath {
  std::vector<double> times;
  std::vector<Vec> states;
  std::vector<Vec> regulator;
};

/// Rows of the derivative process; alive[i] is false while coordinate i sits
/// on the boundary (its row was zeroed at the last step).
struct DerivativeState {
  Mat matrix;
  std::vector<bool> alive;

  static DerivativeState identity(int d) { return {Mat::Identity(d, d), std::vector<bool>(d, true)}; }
};

/// h = f + g with g(t) = max(0, max_{s<=t} -f(s)).
std::pair<std::vector<double>, std::vector<double>> skorokhod_map_1d(const std::vector<double>& f);

/// Discrete Skorokhod problem on the orthant with R = I - Q^T. For R = I this is
/// the coordinatewise 1-d map; otherwise each grid step solves the monotone
/// fixed point g = max(g_prev, -f + Q^T g).
DiscretePath skorokhod_map_orthant(const std::vector<Vec>& free_path, const Mat& reflection,
                                   const std::vector<double>& times = {});

struct EulerStep {
  Vec state;
  DerivativeState deriv;
  Vec dY;
};

/// One step of the reflected Euler scheme with R = I and its derivative:
/// deriv' = deriv + Db~(state) deriv dt, then rows with state'_i = 0 zeroed.
EulerStep euler_reference_step(const Vec& state, const DerivativeState& deriv, const Vec& btilde,
                               const Mat& jacobian_btilde, const Mat& sigma, const Vec& dW, double dt);

struct WeightedSample {
  double s = 0.0;
  Vec z;
  Vec v;           // V(s; t, x)
  double pushing = 0.0;  // int_t^s e^{-beta(r-t)} kappa . dY
  Vec p;           // P(s; t, x)
};

struct PathOptions {
  int steps_per_interval = 50;
  ReflectionRule rule = ReflectionRule::projection;
};

/// Simulates the reference process from (t, x) through the sorted targets and
/// records state, weight and pushing terms at each target.
std::vector<WeightedSample> simulate_weighted_path(RngStream& rng, const ReferenceProcess& ref,
                                                   const ProblemSpec& spec, double t, const Vec& x,
                                                   const std::vector<double>& s_targets,
                                                   const PathOptions& options = {});

/// Tuple draw under the Euler backend: S from the random-time law, then one
/// path through S (and T when the problem has terminal or pushing terms).
class EulerTupleSampler {
 public:
  EulerTupleSampler(const ProblemSpec& spec, const ReferenceProcess& ref, PathOptions options);

  bool needs_terminal() const { return needs_terminal_; }
  SampleTuple draw(RngStream& rng, double t, const Vec& x) const;

 private:
  const ProblemSpec* spec_;
  const ReferenceProcess* ref_;
  PathOptions options_;
  bool needs_terminal_;
};

}  // namespace rmlp
