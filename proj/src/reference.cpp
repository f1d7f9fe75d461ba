#include "rmlp/reference.hpp"

#include <algorithm>

#include "rmlp/errors.hpp"

namespace rmlp {

std::string Backend::describe() const {
  if (kind == BackendKind::exact) return "exact";
  return "euler(" + std::to_string(steps) + (rule == ReflectionRule::bridge ? ",bridge)" : ")");
}

void ReferenceProcess::drift(const double* x, double* out) const {
  if (constant) {
    std::copy(constant_drift.data(), constant_drift.data() + dim, out);
    return;
  }
  drift_fn(x, out);
}

void ReferenceProcess::jacobian(const double* x, double* out) const {
  if (constant) {
    std::fill(out, out + dim * dim, 0.0);
    return;
  }
  jacobian_fn(x, out);
}

Vec ReferenceProcess::drift(const Vec& x) const {
  Vec out(dim);
  drift(x.data(), out.data());
  return out;
}

Mat ReferenceProcess::jacobian(const Vec& x) const {
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> j(dim, dim);
  jacobian(x.data(), j.data());
  return j;
}

ReferenceProcess independent_rbm_reference(const ProblemSpec& spec) {
  ReferenceProcess r;
  r.name = "independent-rbm";
  r.dim = spec.dim;
  r.backend = Backend::exact();
  r.constant = true;
  r.constant_drift = spec.drift_base;
  return r;
}

ReferenceProcess constant_drift_reference(const ProblemSpec& spec, int steps) {
  if (steps < 1) throw invalid_argument("constant_drift_reference: steps must be positive");
  ReferenceProcess r = independent_rbm_reference(spec);
  r.name = "constant-drift";
  r.backend = Backend::euler(steps);
  return r;
}

}  // namespace rmlp
