#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rmlp/problem.hpp"
#include "rmlp/reference.hpp"
#include "rmlp/rng.hpp"

namespace rmlp {

/// Open-chain parallel-server system: gamma = -1, sigma = I, R = I, beta = 0,
/// kappa = 0, xi = 0, G bidiagonal with G_ii = 1 and G_{i+1,i} = -1.
struct OpenChainSpec {
  int dim = 2;
  double action_bound = 1.0;
  Vec holding_cost;
  double horizon = 0.2;
  ProblemSpec problem;
};

OpenChainSpec build_open_chain(int d, double ca, const Vec& h, double T = 0.2);

/// True iff h is nonincreasing, the condition under which least control is optimal.
bool lc_optimality_check(const Vec& h);

struct BaselineResult {
  double mean = 0.0;
  double stderr_ = 0.0;
  long paths = 0;
  double dt = 0.0;
};

enum class MinimumRule {
  grid,    // running minimum over grid points only
  bridge,  // includes the sampled Brownian-bridge minimum inside each step
};

/// Monte Carlo cost of the least-control policy from (t, x). Path p draws from
/// lane p of the stream keyed by `key`.
BaselineResult least_control_cost(const RngKey& key, const OpenChainSpec& spec, double t, const Vec& x, double dt,
                                  long n_paths, MinimumRule rule = MinimumRule::bridge);

/// One least-control path on the dt grid; states[k] is Z at t + k dt.
struct LeastControlPath {
  std::vector<Vec> states;
  std::vector<Vec> regulator;
  double cost = 0.0;
};

LeastControlPath least_control_path(RngStream& rng, const OpenChainSpec& spec, double t, const Vec& x, double dt,
                                    MinimumRule rule = MinimumRule::bridge, bool keep_path = true);

/// b~(x) = base + (C_A/2)(tanh(2 x2 - x1) + 1)(1, -1), simulated with the Euler scheme.
ReferenceProcess switching_curve_reference(double ca, const Vec& base, int steps = 50);

struct PolicyCell {
  double x1 = 0.0;
  double x2 = 0.0;
  bool present = false;
  double d1 = 0.0;
  double d2 = 0.0;
  double diff = 0.0;  // d1 - d2
  std::string label;  // "+" serve, "x" idle, "absent" when no estimate
};

struct GridEstimate {
  Vec state;
  std::optional<Vec> gradient;
};

std::vector<PolicyCell> policy_grid(const std::vector<GridEstimate>& estimates, const ProblemSpec& spec);

/// Minimum number of label changes needed to make every x1 column monotone
/// ("x" for small x2, "+" for large x2), summed over columns. Absent cells are skipped.
int switching_violations(const std::vector<PolicyCell>& cells);

}  // namespace rmlp
