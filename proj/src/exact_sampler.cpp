#include "rmlp/exact_sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "rmlp/errors.hpp"

namespace rmlp {

namespace {

// Unchecked kernels shared by the public samplers and the tuple sampler.

inline double random_time_unchecked(RngStream& rng, double t, double T, double beta) {
  const double delta = T - t;
  const double u = rng.uniform();
  if (beta == 0.0) return t + delta * u * u;
  const double b = std::sqrt(2.0 * beta * delta);
  const double half_mass = 0.5 * std::erf(b / std::numbers::sqrt2);  // Phi(b) - 1/2
  const double q = normal_quantile(0.5 + u * half_mass);
  return t + std::min(q * q / (2.0 * beta), delta);
}

inline double hitting_time_unchecked(RngStream& rng, double x, double gamma, double sigma) {
  const double n = rng.normal();
  if (gamma == 0.0) {
    const double r = x / sigma;
    return r * r / (n * n);
  }
  const double mu = -x / gamma;
  const double lambda = (x / sigma) * (x / sigma);
  const double a = mu * n * n / (2.0 * lambda);
  const double root = mu / (1.0 + a + std::sqrt(a * a + 2.0 * a));
  const double u = rng.uniform();
  return u * (mu + root) <= mu ? root : mu * mu / root;
}

inline double rbm0_unchecked(RngStream& rng, double t, double gamma, double sigma) {
  const double w = -gamma * t + sigma * std::sqrt(t) * rng.normal();
  const double c = -2.0 * sigma * sigma * t * std::log(rng.uniform());
  const double r = std::sqrt(w * w + c);
  return w > 0.0 ? c / (2.0 * (r + w)) : 0.5 * (r - w);
}

inline double meander_unchecked(RngStream& rng, double s, double tau, double x, double sigma) {
  const double frac = (tau - s) / tau;
  const double var = s * frac;
  const double a = x * frac + sigma * std::sqrt(var) * rng.normal();
  const double e = rng.exponential();
  return std::sqrt(a * a + 2.0 * sigma * sigma * var * e);
}

inline CoordinateTriple triple_unchecked(RngStream& rng, double t, double s, double x, double gamma, double sigma) {
  CoordinateTriple out;
  if (x <= 0.0) {
    out.tau = t;
    out.b_at_tau_min_s = 0.0;
    out.z_at_s = rbm0_unchecked(rng, s - t, gamma, sigma);
    return out;
  }
  const double hit = hitting_time_unchecked(rng, x, gamma, sigma);
  out.tau = t + hit;
  if (s - t >= hit) {
    out.b_at_tau_min_s = -(x + gamma * hit) / sigma;
    const double rest = (s - t) - hit;
    out.z_at_s = rest > 0.0 ? rbm0_unchecked(rng, rest, gamma, sigma) : 0.0;
  } else {
    out.z_at_s = meander_unchecked(rng, s - t, hit, x, sigma);
    out.b_at_tau_min_s = (out.z_at_s - x - gamma * (s - t)) / sigma;
  }
  return out;
}

}  // namespace

double normalizing_constant(double beta, double delta) {
  if (!(delta > 0.0) || !std::isfinite(delta)) throw invalid_argument("normalizing_constant: delta must be positive");
  if (!(beta >= 0.0)) throw invalid_argument("normalizing_constant: beta must be nonnegative");
  if (beta == 0.0) return 2.0 * std::sqrt(delta);
  return std::sqrt(std::numbers::pi / beta) * std::erf(std::sqrt(beta * delta));
}

double sample_random_time(RngStream& rng, double t, double T, double beta) {
  if (!(T > t)) throw invalid_argument("sample_random_time: need T > t");
  if (!(beta >= 0.0)) throw invalid_argument("sample_random_time: beta must be nonnegative");
  return random_time_unchecked(rng, t, T, beta);
}

double sample_hitting_time(RngStream& rng, double x, double gamma, double sigma) {
  if (!std::isfinite(x) || !std::isfinite(gamma) || !std::isfinite(sigma))
    throw invalid_argument("sample_hitting_time: non-finite input");
  if (x <= 0.0) throw degenerate_input("sample_hitting_time: start point on the boundary");
  if (gamma > 0.0) throw invalid_argument("sample_hitting_time: gamma must be nonpositive");
  if (!(sigma > 0.0)) throw invalid_argument("sample_hitting_time: sigma must be positive");
  return hitting_time_unchecked(rng, x, gamma, sigma);
}

double sample_rbm_marginal_from_zero(RngStream& rng, double t, double gamma, double sigma) {
  if (!(t > 0.0) || !std::isfinite(t)) throw invalid_argument("sample_rbm_marginal_from_zero: t must be positive");
  if (!(sigma > 0.0)) throw invalid_argument("sample_rbm_marginal_from_zero: sigma must be positive");
  return rbm0_unchecked(rng, t, gamma, sigma);
}

double sample_meander_at(RngStream& rng, double s, double tau, double x, double sigma) {
  if (!(s > 0.0) || !(s < tau)) throw invalid_argument("sample_meander_at: need 0 < s < tau");
  if (!(x > 0.0)) throw invalid_argument("sample_meander_at: x must be positive");
  if (!(sigma > 0.0)) throw invalid_argument("sample_meander_at: sigma must be positive");
  return meander_unchecked(rng, s, tau, x, sigma);
}

CoordinateTriple sample_coordinate_triple(RngStream& rng, double t, double s, double x, double gamma, double sigma) {
  if (!(s > t)) throw invalid_argument("sample_coordinate_triple: need s > t");
  if (!(x >= 0.0) || !std::isfinite(x)) throw invalid_argument("sample_coordinate_triple: x must be nonnegative");
  if (gamma > 0.0) throw invalid_argument("sample_coordinate_triple: gamma must be nonpositive");
  if (!(sigma > 0.0)) throw invalid_argument("sample_coordinate_triple: sigma must be positive");
  return triple_unchecked(rng, t, s, x, gamma, sigma);
}

void check_exact_supported(const ProblemSpec& spec) {
  if (!spec.sigma_is_diagonal()) throw unsupported_configuration("exact backend needs a diagonal sigma");
  if (!spec.normal_reflection()) throw unsupported_configuration("exact backend needs R = I");
  if (!spec.pushing_is_zero()) throw unsupported_configuration("exact backend needs pushing_penalty = 0");
  if (!spec.terminal_cost.is_zero()) throw unsupported_configuration("exact backend needs a zero terminal cost");
  if ((spec.drift_base.array() > 0.0).any())
    throw unsupported_configuration("exact backend needs drift_base <= 0 componentwise");
}

ExactTupleSampler::ExactTupleSampler(const ProblemSpec& spec)
    : horizon_(spec.horizon), beta_(spec.discount) {
  check_exact_supported(spec);
  gamma_.assign(spec.drift_base.data(), spec.drift_base.data() + spec.dim);
  for (int j = 0; j < spec.dim; ++j) sigma_.push_back(spec.sigma(j, j));
}

double ExactTupleSampler::draw(RngStream& rng, double t, const double* x, double* z, double* w) const {
  const double s = random_time_unchecked(rng, t, horizon_, beta_);
  const double inv_root = 1.0 / std::sqrt(std::max(s - t, kMinElapsed));
  const int d = dim();
  for (int j = 0; j < d; ++j) {
    const CoordinateTriple c = triple_unchecked(rng, t, s, x[j], gamma_[j], sigma_[j]);
    z[j] = c.z_at_s;
    w[j] = c.b_at_tau_min_s / sigma_[j] * inv_root;
  }
  return s;
}

SampleTuple assemble_tuple(RngStream& rng, const ProblemSpec& spec, const ReferenceProcess& ref, double t,
                           const Vec& x) {
  if (ref.backend.kind != BackendKind::exact)
    throw unsupported_configuration("assemble_tuple: only the exact backend is supported here");
  if (!ref.constant || ref.constant_drift != spec.drift_base)
    throw unsupported_configuration("assemble_tuple: exact backend needs the reference drift to equal drift_base");
  if (x.size() != spec.dim || !(x.array() >= 0.0).all()) throw invalid_argument("assemble_tuple: x must lie in the orthant");
  if (!(t >= 0.0 && t < spec.horizon)) throw invalid_argument("assemble_tuple: need 0 <= t < T");
  const ExactTupleSampler sampler(spec);
  SampleTuple out;
  out.z_s.resize(spec.dim);
  out.v_s.resize(spec.dim);
  out.s = sampler.draw(rng, t, x.data(), out.z_s.data(), out.v_s.data());
  return out;
}

}  // namespace rmlp
