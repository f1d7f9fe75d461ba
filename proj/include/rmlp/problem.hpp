#pragma once

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace rmlp {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Terminal cost xi. Either identically zero or linear with nonnegative
/// coefficients; serialized as "zero" or {"linear": [...]}.
struct TerminalCost {
  Vec linear;  // empty means identically zero

  static TerminalCost zero() { return {}; }
  static TerminalCost linear_in(Vec coeffs) { return {std::move(coeffs)}; }

  bool is_zero() const { return linear.size() == 0 || linear.isZero(0.0); }
  double operator()(const double* x, int d) const;
};

struct ProblemSpec {
  int dim = 0;
  int control_dim = 0;
  double horizon = 0.0;
  double discount = 0.0;
  Mat sigma;
  Mat reflection;
  Vec drift_base;
  Mat control_matrix;
  double action_bound = 0.0;
  Vec holding_cost;
  Vec pushing_penalty;
  TerminalCost terminal_cost;

  /// Throws rmlp::invalid_argument when a field violates its constraints.
  void validate() const;

  bool sigma_is_diagonal() const;
  bool normal_reflection() const;
  bool pushing_is_zero() const { return pushing_penalty.isZero(0.0); }
  /// Q = I - R^T.
  Mat reflection_q() const { return Mat::Identity(dim, dim) - reflection.transpose(); }
};

ProblemSpec problem_from_json(const nlohmann::json& j);
nlohmann::json problem_to_json(const ProblemSpec& spec);

/// Precomputed sparse view of G used by the Hamiltonians. Columns of the
/// open-chain G have two nonzeros, so G^T p costs O(d) instead of O(dK).
class ControlOperator {
 public:
  ControlOperator() = default;
  explicit ControlOperator(const ProblemSpec& spec);

  int control_dim() const { return static_cast<int>(start_.size()) - 1; }
  double action_bound() const { return ca_; }

  /// (G^T p)_k
  double gt_p(int k, const double* p) const {
    double s = 0.0;
    for (int e = start_[k]; e < start_[k + 1]; ++e) s += val_[e] * p[row_[e]];
    return s;
  }

  /// C_A * sum_k min((G^T p)_k, 0)
  double bar(const double* p) const {
    double s = 0.0;
    for (int k = 0; k < control_dim(); ++k) s += std::min(gt_p(k, p), 0.0);
    return ca_ * s;
  }

 private:
  std::vector<int> start_{0};
  std::vector<int> row_;
  std::vector<double> val_;
  double ca_ = 0.0;
};

double hamiltonian_general(const ProblemSpec& spec, const Vec& x, const Vec& p, const Vec& btilde_x);
double hamiltonian_bar(const ProblemSpec& spec, const Vec& p);

struct WeightFn {
  double alpha0 = 1.0;
  double log_dim_term = 0.0;

  static WeightFn make(int dim, double alpha0 = 1.0);
};

double weight(const WeightFn& w, const Vec& x);

/// Bang-bang readout: a_k = C_A when (G^T grad)_k <= 0, else 0.
Vec policy_readout(const Vec& grad, const ProblemSpec& spec);

}  // namespace rmlp
