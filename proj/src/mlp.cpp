#include "rmlp/mlp.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "rmlp/errors.hpp"

namespace rmlp {

Summary summarize_replicates(const std::vector<double>& raw) {
  if (raw.empty()) throw invalid_argument("summarize_replicates: no replicates");
  Summary s;
  double sum = 0.0;
  for (double v : raw) sum += v;
  s.mean = sum / static_cast<double>(raw.size());
  if (raw.size() >= 2) {
    double ss = 0.0;
    for (double v : raw) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(raw.size() - 1));
    if (s.mean != 0.0) s.percent = 100.0 * *s.std / std::fabs(s.mean);
  }
  return s;
}

std::uint64_t MlpEstimate::sampler_calls() const {
  std::uint64_t total = 0;
  for (const auto& r : per_replicate) total += r.sampler_calls;
  return total;
}

double MlpEstimate::seconds() const {
  double total = 0.0;
  for (const auto& r : per_replicate) total += r.seconds;
  return total;
}

std::uint64_t expected_sampler_calls(int n, std::uint64_t M) {
  std::vector<std::uint64_t> calls(static_cast<std::size_t>(std::max(n, 0)) + 1, 0);
  std::vector<std::uint64_t> pw(calls.size(), 1);
  for (std::size_t k = 1; k < pw.size(); ++k) pw[k] = pw[k - 1] * M;
  for (int k = 1; k <= n; ++k) {
    std::uint64_t c = pw[static_cast<std::size_t>(k)];
    for (int l = 1; l < k; ++l)
      c += pw[static_cast<std::size_t>(k - l)] *
           (1 + calls[static_cast<std::size_t>(l)] + calls[static_cast<std::size_t>(l - 1)]);
    calls[static_cast<std::size_t>(k)] = c;
  }
  return calls[static_cast<std::size_t>(std::max(n, 0))];
}

MlpProblem::MlpProblem(const ProblemSpec& spec, const ReferenceProcess& ref, const MlpConfig& config)
    : spec_(spec), ref_(ref), config_(config) {
  if (config.level < 0) throw invalid_argument("mlp: level must be nonnegative");
  if (config.branch_base < 1) throw invalid_argument("mlp: M must be at least 1");
  if (config.replicates < 1) throw invalid_argument("mlp: replicates must be at least 1");
  spec_.validate();
  if (ref_.dim != spec_.dim) throw invalid_argument("mlp: reference and problem dimensions differ");

  pow_.assign(static_cast<std::size_t>(config.level) + 1, 1);
  for (std::size_t k = 1; k < pow_.size(); ++k) {
    if (pow_[k - 1] > (std::uint64_t{1} << 62) / config.branch_base)
      throw invalid_argument("mlp: M^level overflows the sample counter");
    pow_[k] = pow_[k - 1] * config.branch_base;
  }

  const bool reference_is_base = ref_.constant && ref_.constant_drift == spec_.drift_base;
  if (config.backend.kind == BackendKind::exact) {
    check_exact_supported(spec_);
    if (!reference_is_base)
      throw unsupported_configuration("exact backend needs the independent-RBM reference (b~ = drift_base)");
    exact_ = ExactTupleSampler(spec_);
  } else {
    if (config.backend.steps < 1) throw invalid_argument("mlp: euler steps must be positive");
    PathOptions opts;
    opts.steps_per_interval = config.backend.steps;
    opts.rule = config.backend.rule;
    euler_.emplace(spec_, ref_, opts);
    has_extra_ = euler_->needs_terminal();
  }
  if (config.variance_reduced) {
    if (!spec_.pushing_is_zero() || !spec_.terminal_cost.is_zero() || !spec_.sigma_is_diagonal() ||
        !spec_.normal_reflection() || !ref_.constant)
      throw unsupported_configuration(
          "variance-reduced estimator needs kappa = 0, xi = 0, diagonal sigma, R = I and a constant reference drift");
  }
  control_ = ControlOperator(spec_);
  h_.assign(spec_.holding_cost.data(), spec_.holding_cost.data() + spec_.dim);
}

double MlpProblem::draw(RngStream& rng, double t, const double* x, double* z, double* w, double* extra_value,
                        double* extra_grad) const {
  if (exact()) return exact_.draw(rng, t, x, z, w);
  const int d = dim();
  const SampleTuple tup = euler_->draw(rng, t, Eigen::Map<const Vec>(x, d));
  std::copy(tup.z_s.data(), tup.z_s.data() + d, z);
  std::copy(tup.v_s.data(), tup.v_s.data() + d, w);
  if (extra_value != nullptr && has_extra_) {
    const double span = spec_.horizon - t;
    const double disc = std::exp(-spec_.discount * span);
    const double xi = spec_.terminal_cost(tup.z_T.data(), d);
    *extra_value = tup.pushing + disc * xi;
    const double gw = disc * xi / std::sqrt(std::max(span, kMinElapsed));
    for (int j = 0; j < d; ++j) extra_grad[j] = tup.p_T(j) + gw * tup.v_T(j);
  }
  return tup.s;
}

double MlpProblem::hamiltonian_difference(const double* z, const double* hi, const double* lo, double* scratch) const {
  double diff = control_.bar(hi) - control_.bar(lo);
  const bool reference_is_base = ref_.constant && ref_.constant_drift == spec_.drift_base;
  if (!reference_is_base) {
    ref_.drift(z, scratch);
    for (int i = 0; i < dim(); ++i) diff += (spec_.drift_base(i) - scratch[i]) * (hi[i] - lo[i]);
  }
  return diff;
}

void MlpProblem::level0_integrand(const double* z, const double* w, double sq, double* value, double* grad) const {
  const int d = dim();
  double c = 0.0;
  for (int i = 0; i < d; ++i) c += h_[static_cast<std::size_t>(i)] * z[i];
  *value = sq * c;
  if (config_.variance_reduced) {
    for (int j = 0; j < d; ++j) grad[j] = h_[static_cast<std::size_t>(j)] * z[j] * w[j];
  } else {
    for (int j = 0; j < d; ++j) grad[j] = c * w[j];
  }
}

namespace {

inline double fast_constant(double beta, double delta) {
  if (beta == 0.0) return 2.0 * std::sqrt(delta);
  return normalizing_constant(beta, delta);
}

// Per-thread scratch: one frame of buffers per recursion depth.
class Workspace {
 public:
  static constexpr int kSlots = 8;
  Workspace(int d, int depth) : d_(d), buf_(static_cast<std::size_t>(d) * kSlots * (depth + 1), 0.0) {}
  double* slot(int depth, int k) {
    return buf_.data() + (static_cast<std::size_t>(depth) * kSlots + static_cast<std::size_t>(k)) * d_;
  }

 private:
  std::size_t d_;
  std::vector<double> buf_;
};

enum Slot { kZ = 0, kW, kHi, kLo, kScratch, kAcc, kExtra, kInt };

void node(const MlpProblem& P, Workspace& ws, int depth, const RngKey& key, int n, double t, const double* x,
          double& value, double* grad, std::uint64_t& calls);

// Adds the samples [begin, end) of term l of an estimator at (t, x)
// to acc_v / acc_g. Term 0 is the level-0 integrand, term l >= 1 the
// Hamiltonian difference between levels l and l - 1.
void accumulate_term(const MlpProblem& P, Workspace& ws, int depth, const RngKey& key, int l, double t,
                     const double* x, double C, std::uint64_t begin, std::uint64_t end, double& acc_v, double* acc_g,
                     std::uint64_t& calls) {
  const int d = P.dim();
  double* z = ws.slot(depth, kZ);
  double* w = ws.slot(depth, kW);
  double* hi = ws.slot(depth, kHi);
  double* lo = ws.slot(depth, kLo);
  double* scratch = ws.slot(depth, kScratch);
  double* extra = ws.slot(depth, kExtra);
  double* integ = ws.slot(depth, kInt);
  const RngKey tuple_key = key.child(l, 0, kTupleTag);

  if (l == 0) {
    for (std::uint64_t m = begin; m < end; ++m) {
      RngStream rng(tuple_key, m);
      double ev = 0.0;
      const double s = P.draw(rng, t, x, z, w, &ev, extra);
      ++calls;
      const double sq = std::sqrt(std::max(s - t, kMinElapsed));
      double iv;
      P.level0_integrand(z, w, sq, &iv, integ);
      acc_v += C * iv;
      for (int j = 0; j < d; ++j) acc_g[j] += C * integ[j];
      if (P.has_extra_terms()) {
        acc_v += ev;
        for (int j = 0; j < d; ++j) acc_g[j] += extra[j];
      }
    }
    return;
  }

  for (std::uint64_t m = begin; m < end; ++m) {
    RngStream rng(tuple_key, m);
    const double s = P.draw(rng, t, x, z, w, nullptr, nullptr);
    ++calls;
    double vhi = 0.0, vlo = 0.0;
    const auto mi = static_cast<std::int64_t>(m);
    node(P, ws, depth + 1, key.child(l, mi, kRecursionTag), l, s, z, vhi, hi, calls);
    node(P, ws, depth + 1, key.child(-l, mi, kRecursionTag), l - 1, s, z, vlo, lo, calls);
    const double diff = P.hamiltonian_difference(z, hi, lo, scratch);
    const double sq = std::sqrt(std::max(s - t, kMinElapsed));
    acc_v += C * sq * diff;
    const double cd = C * diff;
    for (int j = 0; j < d; ++j) acc_g[j] += cd * w[j];
  }
}

void node(const MlpProblem& P, Workspace& ws, int depth, const RngKey& key, int n, double t, const double* x,
          double& value, double* grad, std::uint64_t& calls) {
  const int d = P.dim();
  value = 0.0;
  std::fill(grad, grad + d, 0.0);
  const double span = P.spec().horizon - t;
  if (n == 0 || !(span > 0.0)) return;
  const double C = fast_constant(P.spec().discount, span);
  double* acc = ws.slot(depth, kAcc);
  for (int l = 0; l < n; ++l) {
    const std::uint64_t count = P.samples(l == 0 ? n : n - l);
    double av = 0.0;
    std::fill(acc, acc + d, 0.0);
    accumulate_term(P, ws, depth, key, l, t, x, C, 0, count, av, acc, calls);
    const double inv = 1.0 / static_cast<double>(count);
    value += av * inv;
    for (int j = 0; j < d; ++j) grad[j] += acc[j] * inv;
  }
}

struct Task {
  int term;
  std::uint64_t begin;
  std::uint64_t end;
};

constexpr std::uint64_t kMaxChunks = 256;

void check_point(const MlpProblem& P, double t, const Vec& x) {
  if (!(t >= 0.0 && t < P.spec().horizon)) throw invalid_argument("mlp: need 0 <= t < T");
  if (x.size() != P.dim() || !x.allFinite() || !(x.array() >= 0.0).all())
    throw invalid_argument("mlp: x must be a finite point of the orthant");
}

}  // namespace

Replicate mlp_replicate(const MlpProblem& P, const RngKey& key, double t, const Vec& x, int workers) {
  check_point(P, t, x);
  const auto start = std::chrono::steady_clock::now();
  const int d = P.dim();
  const int n = P.config().level;
  Replicate rep;
  rep.gradient = Vec::Zero(d);
  if (n > 0) {
    std::vector<Task> tasks;
    std::vector<std::size_t> first(static_cast<std::size_t>(n) + 1, 0);
    for (int l = 0; l < n; ++l) {
      first[static_cast<std::size_t>(l)] = tasks.size();
      const std::uint64_t count = P.samples(l == 0 ? n : n - l);
      const std::uint64_t chunks = std::min(count, kMaxChunks);
      for (std::uint64_t c = 0; c < chunks; ++c) tasks.push_back({l, c * count / chunks, (c + 1) * count / chunks});
    }
    first[static_cast<std::size_t>(n)] = tasks.size();

    const double C = fast_constant(P.spec().discount, P.spec().horizon - t);
    const auto ntasks = static_cast<std::int64_t>(tasks.size());
    std::vector<double> part_v(tasks.size(), 0.0);
    std::vector<double> part_g(tasks.size() * static_cast<std::size_t>(d), 0.0);
    std::vector<std::uint64_t> part_calls(tasks.size(), 0);
    const int threads = workers > 0 ? workers : omp_get_max_threads();
    bool failed = false;
    std::string failure;

#pragma omp parallel num_threads(threads)
    {
      Workspace ws(d, n + 1);
#pragma omp for schedule(dynamic, 1)
      for (std::int64_t i = 0; i < ntasks; ++i) {
        const auto k = static_cast<std::size_t>(i);
        try {
          accumulate_term(P, ws, 0, key, tasks[k].term, t, x.data(), C, tasks[k].begin, tasks[k].end, part_v[k],
                          part_g.data() + k * static_cast<std::size_t>(d), part_calls[k]);
        } catch (const std::exception& e) {
#pragma omp critical(rmlp_mlp_failure)
          {
            failed = true;
            failure = e.what();
          }
        }
      }
    }
    if (failed) throw numerical_failure("mlp: " + failure);

    for (int l = 0; l < n; ++l) {
      const std::uint64_t count = P.samples(l == 0 ? n : n - l);
      double sv = 0.0;
      Vec sg = Vec::Zero(d);
      for (std::size_t k = first[static_cast<std::size_t>(l)]; k < first[static_cast<std::size_t>(l) + 1]; ++k) {
        sv += part_v[k];
        for (int j = 0; j < d; ++j) sg(j) += part_g[k * static_cast<std::size_t>(d) + static_cast<std::size_t>(j)];
        rep.sampler_calls += part_calls[k];
      }
      const double inv = 1.0 / static_cast<double>(count);
      rep.value += sv * inv;
      rep.gradient += sg * inv;
    }
  }
  if (!std::isfinite(rep.value) || !rep.gradient.allFinite()) throw numerical_failure("mlp: non-finite estimate");
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

MlpEstimate mlp_estimate(const ProblemSpec& spec, const ReferenceProcess& ref, const MlpConfig& config, double t,
                         const Vec& x, std::uint64_t seed, const RunOptions& options) {
  const MlpProblem problem(spec, ref, config);
  MlpEstimate est;
  est.config = config;
  std::vector<double> values;
  std::vector<std::vector<double>> grads(static_cast<std::size_t>(spec.dim));
  for (int r = 0; r < config.replicates; ++r) {
    Replicate rep = mlp_replicate(problem, RngKey::root(seed, static_cast<std::uint64_t>(r)), t, x, options.workers);
    values.push_back(rep.value);
    for (int j = 0; j < spec.dim; ++j) grads[static_cast<std::size_t>(j)].push_back(rep.gradient(j));
    est.per_replicate.push_back(std::move(rep));
  }
  est.value_summary = summarize_replicates(values);
  est.value = est.value_summary.mean;
  est.gradient = Vec::Zero(spec.dim);
  for (int j = 0; j < spec.dim; ++j) {
    est.gradient_summary.push_back(summarize_replicates(grads[static_cast<std::size_t>(j)]));
    est.gradient(j) = est.gradient_summary.back().mean;
  }
  return est;
}

MlpEstimate mlp_estimate_variance_reduced(const ProblemSpec& spec, const ReferenceProcess& ref, MlpConfig config,
                                          double t, const Vec& x, std::uint64_t seed, const RunOptions& options) {
  config.variance_reduced = true;
  return mlp_estimate(spec, ref, config, t, x, seed, options);
}

}  // namespace rmlp
