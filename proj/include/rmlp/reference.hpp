#pragma once

#include <functional>
#include <string>

#include "rmlp/problem.hpp"

namespace rmlp {

enum class BackendKind { exact, euler };

/// How one Euler step enforces the boundary.
enum class ReflectionRule {
  projection,  // max(0, free end point)
  bridge,      // pushes by the sampled Brownian-bridge minimum over the step
};

struct Backend {
  BackendKind kind = BackendKind::exact;
  int steps = 50;  // Euler steps per (t, target) interval
  ReflectionRule rule = ReflectionRule::projection;

  static Backend exact() { return {BackendKind::exact, 0, ReflectionRule::projection}; }
  static Backend euler(int steps = 50, ReflectionRule rule = ReflectionRule::projection) {
    return {BackendKind::euler, steps, rule};
  }
  std::string describe() const;
};

/// Reference drift b~ together with the simulation backend used for it.
/// Drift and Jacobian callbacks write into caller-owned buffers; the
/// Jacobian is row-major, J[i*d + j] = d b~_i / d x_j.
struct ReferenceProcess {
  using DriftFn = std::function<void(const double* x, double* out)>;
  using JacobianFn = std::function<void(const double* x, double* out)>;

  std::string name;
  int dim = 0;
  Backend backend;
  bool constant = true;
  Vec constant_drift;
  DriftFn drift_fn;
  JacobianFn jacobian_fn;

  void drift(const double* x, double* out) const;
  void jacobian(const double* x, double* out) const;
  Vec drift(const Vec& x) const;
  Mat jacobian(const Vec& x) const;
};

/// b~ = gamma, coordinates simulated exactly as independent RBMs.
ReferenceProcess independent_rbm_reference(const ProblemSpec& spec);

/// b~ = gamma, simulated by the Euler scheme.
ReferenceProcess constant_drift_reference(const ProblemSpec& spec, int steps = 50);

}  // namespace rmlp
