#include <algorithm>
#include <chrono>
#include <cmath>

#include "rmlp/errors.hpp"
#include "rmlp/mlp.hpp"

namespace rmlp {

namespace {

struct Pair {
  double value = 0.0;
  std::vector<double> grad;
};

Pair level(const MlpProblem& P, const RngKey& key, int n, double t, const std::vector<double>& x,
           std::uint64_t& calls) {
  const int d = P.dim();
  Pair out{0.0, std::vector<double>(static_cast<std::size_t>(d), 0.0)};
  const double span = P.spec().horizon - t;
  if (n == 0 || !(span > 0.0)) return out;
  const double C = normalizing_constant(P.spec().discount, span);

  std::vector<double> z(static_cast<std::size_t>(d)), w(z), integ(z), extra(z), scratch(z);

  // level-0 integrand
  {
    const std::uint64_t count = P.samples(n);
    const RngKey tuple_key = key.child(0, 0, kTupleTag);
    double sv = 0.0;
    std::vector<double> sg(static_cast<std::size_t>(d), 0.0);
    for (std::uint64_t m = 0; m < count; ++m) {
      RngStream rng(tuple_key, m);
      double ev = 0.0;
      const double s = P.draw(rng, t, x.data(), z.data(), w.data(), &ev, extra.data());
      ++calls;
      double iv;
      P.level0_integrand(z.data(), w.data(), std::sqrt(std::max(s - t, kMinElapsed)), &iv, integ.data());
      sv += C * iv;
      for (int j = 0; j < d; ++j) sg[j] += C * integ[j];
      if (P.has_extra_terms()) {
        sv += ev;
        for (int j = 0; j < d; ++j) sg[j] += extra[j];
      }
    }
    out.value += sv / static_cast<double>(count);
    for (int j = 0; j < d; ++j) out.grad[j] += sg[j] / static_cast<double>(count);
  }

  for (int l = 1; l < n; ++l) {
    const std::uint64_t count = P.samples(n - l);
    const RngKey tuple_key = key.child(l, 0, kTupleTag);
    double sv = 0.0;
    std::vector<double> sg(static_cast<std::size_t>(d), 0.0);
    for (std::uint64_t m = 0; m < count; ++m) {
      RngStream rng(tuple_key, m);
      const double s = P.draw(rng, t, x.data(), z.data(), w.data(), nullptr, nullptr);
      ++calls;
      const auto mi = static_cast<std::int64_t>(m);
      const Pair hi = level(P, key.child(l, mi, kRecursionTag), l, s, z, calls);
      const Pair lo = level(P, key.child(-l, mi, kRecursionTag), l - 1, s, z, calls);
      const double diff = P.hamiltonian_difference(z.data(), hi.grad.data(), lo.grad.data(), scratch.data());
      sv += C * std::sqrt(std::max(s - t, kMinElapsed)) * diff;
      for (int j = 0; j < d; ++j) sg[j] += C * diff * w[j];
    }
    out.value += sv / static_cast<double>(count);
    for (int j = 0; j < d; ++j) out.grad[j] += sg[j] / static_cast<double>(count);
  }
  return out;
}

}  // namespace

Replicate mlp_replicate_serial(const MlpProblem& P, const RngKey& key, double t, const Vec& x) {
  if (!(t >= 0.0 && t < P.spec().horizon)) throw invalid_argument("mlp: need 0 <= t < T");
  if (x.size() != P.dim() || !(x.array() >= 0.0).all()) throw invalid_argument("mlp: x must lie in the orthant");
  const auto start = std::chrono::steady_clock::now();
  Replicate rep;
  const Pair p = level(P, key, P.config().level, t, std::vector<double>(x.data(), x.data() + x.size()),
                       rep.sampler_calls);
  rep.value = p.value;
  rep.gradient = Eigen::Map<const Vec>(p.grad.data(), P.dim());
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

}  // namespace rmlp
