#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "rmlp/exact_sampler.hpp"
#include "rmlp/problem.hpp"
#include "rmlp/reference.hpp"
#include "rmlp/rng.hpp"
#include "rmlp/skorokhod.hpp"

namespace rmlp {

struct MlpConfig {
  int level = 1;
  std::uint64_t branch_base = 1;  // M
  int replicates = 5;
  Backend backend = Backend::exact();
  bool variance_reduced = false;
};

struct Summary {
  double mean = 0.0;
  std::optional<double> std;      // Bessel-corrected; absent for a single replicate
  std::optional<double> percent;  // 100 std / |mean|
};

/// Mean, sample std and std as a percentage of |mean|.
Summary summarize_replicates(const std::vector<double>& raw);

struct Replicate {
  double value = 0.0;
  Vec gradient;
  std::uint64_t sampler_calls = 0;
  double seconds = 0.0;
};

struct MlpEstimate {
  double value = 0.0;
  Vec gradient;
  MlpConfig config;
  std::vector<Replicate> per_replicate;
  Summary value_summary;
  std::vector<Summary> gradient_summary;

  std::uint64_t sampler_calls() const;
  double seconds() const;
};

struct RunOptions {
  int workers = 0;  // 0: OpenMP default
};

/// Tuple draws needed by one level-n estimate:
/// calls(n) = M^n + sum_{l=1}^{n-1} M^{n-l} (1 + calls(l) + calls(l-1)), calls(0) = 0.
std::uint64_t expected_sampler_calls(int n, std::uint64_t M);

/// Validated, immutable estimator setup shared by the parallel and serial
/// kernels. Throws unsupported_configuration for combinations the chosen
/// backend cannot simulate.
class MlpProblem {
 public:
  MlpProblem(const ProblemSpec& spec, const ReferenceProcess& ref, const MlpConfig& config);
  MlpProblem(const MlpProblem&) = delete;
  MlpProblem& operator=(const MlpProblem&) = delete;

  const ProblemSpec& spec() const { return spec_; }
  const ReferenceProcess& reference() const { return ref_; }
  const MlpConfig& config() const { return config_; }
  int dim() const { return spec_.dim; }
  bool exact() const { return config_.backend.kind == BackendKind::exact; }

  /// M^k
  std::uint64_t samples(int k) const { return pow_[static_cast<std::size_t>(k)]; }

  /// Draws one tuple. Writes Z(S) to z and V(S; t, x) to w and returns S.
  /// For the level-0 term, extra_value/extra_grad receive the pushing and
  /// terminal contributions (left untouched when the problem has none).
  double draw(RngStream& rng, double t, const double* x, double* z, double* w, double* extra_value,
              double* extra_grad) const;

  bool has_extra_terms() const { return has_extra_; }

  /// H~(z, hi) - H~(z, lo)
  double hamiltonian_difference(const double* z, const double* hi, const double* lo, double* scratch) const;

  /// Level-0 integrand without the C(beta, T - t) factor: value and gradient channels.
  void level0_integrand(const double* z, const double* w, double sq, double* value, double* grad) const;

 private:
  ProblemSpec spec_;
  ReferenceProcess ref_;
  MlpConfig config_;
  ControlOperator control_;
  ExactTupleSampler exact_;
  std::optional<EulerTupleSampler> euler_;
  std::vector<std::uint64_t> pow_;
  std::vector<double> h_;
  bool has_extra_ = false;
};

/// Stream tags used when deriving child keys.
inline constexpr std::int64_t kTupleTag = 1;
inline constexpr std::int64_t kRecursionTag = 2;

/// One replicate with the OpenMP kernel. The top-level sample ranges are cut
/// into chunks that do not depend on the worker count and reduced in a fixed
/// order, so the result is bit-identical for any number of workers.
Replicate mlp_replicate(const MlpProblem& problem, const RngKey& key, double t, const Vec& x, int workers = 0);

MlpEstimate mlp_estimate(const ProblemSpec& spec, const ReferenceProcess& ref, const MlpConfig& config, double t,
                         const Vec& x, std::uint64_t seed, const RunOptions& options = {});

/// Same as mlp_estimate with the variance-reduced level-0 term; requires the
/// benchmark family (kappa = 0, xi = 0, diagonal sigma, R = I, constant reference drift).
MlpEstimate mlp_estimate_variance_reduced(const ProblemSpec& spec, const ReferenceProcess& ref, MlpConfig config,
                                          double t, const Vec& x, std::uint64_t seed, const RunOptions& options = {});

/// Plain depth-first recursion with heap-allocated temporaries and no
/// threading; kept as the reference the parallel kernel is tested against.
Replicate mlp_replicate_serial(const MlpProblem& problem, const RngKey& key, double t, const Vec& x);

}  // namespace rmlp
