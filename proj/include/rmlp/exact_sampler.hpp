#pragma once

#include <vector>

#include "rmlp/problem.hpp"
#include "rmlp/reference.hpp"
#include "rmlp/rng.hpp"

namespace rmlp {

/// Smallest S - t used when forming sqrt(S - t) and the weights.
inline constexpr double kMinElapsed = 1e-15;

/// C(beta, delta): 2 sqrt(delta) for beta = 0, sqrt(pi/beta) erf(sqrt(beta delta)) otherwise.
double normalizing_constant(double beta, double delta);

/// Draws S in (t, T) from the random-time law with normalizing constant C(beta, T - t).
double sample_random_time(RngStream& rng, double t, double T, double beta);

/// First time x + gamma s + sigma B(s) hits zero (inverse Gaussian; Levy law when gamma = 0).
double sample_hitting_time(RngStream& rng, double x, double gamma, double sigma);

/// Time-t marginal of an RBM started at 0 with drift gamma and volatility sigma.
double sample_rbm_marginal_from_zero(RngStream& rng, double t, double gamma, double sigma);

/// Position at time s of a path started at x > 0 conditioned to first hit zero at tau > s.
double sample_meander_at(RngStream& rng, double s, double tau, double x, double sigma);

struct CoordinateTriple {
  double tau = 0.0;
  double z_at_s = 0.0;
  double b_at_tau_min_s = 0.0;
};

CoordinateTriple sample_coordinate_triple(RngStream& rng, double t, double s, double x, double gamma, double sigma);

struct SampleTuple {
  double s = 0.0;
  Vec z_s;
  Vec v_s;
  bool has_terminal = false;  // z_T and v_T populated
  Vec z_T;
  Vec v_T;
  bool has_pushing = false;  // pushing and p_T populated
  double pushing = 0.0;
  Vec p_T;
};

/// One draw of the MLP tuple under the exact independent-RBM backend.
SampleTuple assemble_tuple(RngStream& rng, const ProblemSpec& spec, const ReferenceProcess& ref, double t,
                           const Vec& x);

/// Allocation-free tuple draw used by the estimator kernels.
class ExactTupleSampler {
 public:
  ExactTupleSampler() = default;
  /// Throws unsupported_configuration unless sigma is diagonal, R = I,
  /// kappa = 0 and xi = 0.
  explicit ExactTupleSampler(const ProblemSpec& spec);

  int dim() const { return static_cast<int>(gamma_.size()); }
  double horizon() const { return horizon_; }
  double discount() const { return beta_; }

  /// Writes Z(S) to z and V(S; t, x) to w; returns S.
  double draw(RngStream& rng, double t, const double* x, double* z, double* w) const;

 private:
  std::vector<double> gamma_;
  std::vector<double> sigma_;
  double horizon_ = 0.0;
  double beta_ = 0.0;
};

/// Throws unsupported_configuration with a reason when the exact backend cannot
/// simulate the problem.
void check_exact_supported(const ProblemSpec& spec);

}  // namespace rmlp
