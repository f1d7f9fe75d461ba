#pragma once

#include <cstdint>
#include <vector>

#include "rmlp/mlp.hpp"
#include "rmlp/problem.hpp"
#include "rmlp/reference.hpp"

namespace rmlp {

struct PicardGrid {
  std::vector<double> times;   // increasing, all < T
  std::vector<double> states;  // per-axis nodes, shared by every axis
};

/// Default grid: times {0, 0.25T, 0.5T, 0.75T, 0.95T}, states 0..2 step 0.2.
PicardGrid default_picard_grid(double horizon);

struct PicardIterate {
  int k = 0;
  double value = 0.0;  // at the requested (t, x)
  Vec gradient;
  double diff_norm = 0.0;  // weighted sup-distance of gradient tables to the previous iterate
  double value_diff_norm = 0.0;
};

struct PicardResult {
  std::vector<PicardIterate> iterates;
  /// ratios[i] = iterates[i].diff_norm / iterates[i-1].diff_norm; entry 0 is NaN.
  std::vector<double> ratios;
};

/// Plain Monte Carlo Picard iteration of the gradient map on a tabulated
/// function, for d <= 2. Iterate 0 is v = 0; iterate k evaluates the map at
/// every grid node with `mc_budget` tuples, using v^{(k-1)} interpolated from
/// the table (linear in time with v(T, .) = 0, multilinear in state, clamped).
/// The same tuples are reused at every iteration. Throws
/// unsupported_configuration for d > 2.
PicardResult picard_reference_iteration(const ProblemSpec& spec, const ReferenceProcess& ref, double t, const Vec& x,
                                        int n_iter, std::uint64_t mc_budget, std::uint64_t seed,
                                        const PicardGrid& grid, int workers = 0);

}  // namespace rmlp
