#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace rmlp {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct ValidationOptions {
  std::uint64_t seed = 20240601;
  bool quick = false;  // smaller sample sizes
  int max_workers = 4;
};

/// Fixed-seed estimates agree bitwise across worker counts and reruns, and
/// match the serial kernel to 1e-10 relative.
CheckResult check_determinism(const ValidationOptions& o);

/// Malliavin weights of the exact sampler have mean zero (|mean| <= 4 sd / sqrt(N)).
CheckResult check_weight_mean_zero(const ValidationOptions& o);

/// Regulators only increase on the boundary: Euler reference paths, least-control
/// paths and the oblique orthant map.
CheckResult check_complementarity(const ValidationOptions& o);

/// Ratios of successive weighted Picard differences on the d = 2 grid stay below 1 from k = 3 on.
CheckResult check_picard_contraction(const ValidationOptions& o);

/// Measured sampler calls equal the closed-form count and stay below 5 (3M)^n.
CheckResult check_call_counts(const ValidationOptions& o);

std::vector<CheckResult> run_validation(const ValidationOptions& o = {});

}  // namespace rmlp
