#include <benchmark/benchmark.h>

#include "rmlp/mlp.hpp"
#include "rmlp/pss.hpp"

using namespace rmlp;

namespace {

struct Fixture {
  OpenChainSpec oc;
  ReferenceProcess ref;
  MlpConfig cfg;

  Fixture(int d, int level, std::uint64_t M) : oc(build_open_chain(d, 1.0, Vec::Ones(d))), ref(independent_rbm_reference(oc.problem)) {
    cfg.level = level;
    cfg.branch_base = M;
    cfg.replicates = 1;
    cfg.variance_reduced = true;
  }
};

void BM_Parallel(benchmark::State& state) {
  const Fixture f(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)), static_cast<std::uint64_t>(state.range(2)));
  const MlpProblem P(f.oc.problem, f.ref, f.cfg);
  const Vec x = Vec::Constant(f.oc.dim, 0.4);
  std::uint64_t seed = 0;
  std::uint64_t calls = 0;
  for (auto _ : state) {
    const Replicate r = mlp_replicate(P, RngKey::root(++seed), 0.0, x, static_cast<int>(state.range(3)));
    benchmark::DoNotOptimize(r.value);
    calls += r.sampler_calls;
  }
  state.counters["tuples/s"] = benchmark::Counter(static_cast<double>(calls), benchmark::Counter::kIsRate);
}

void BM_Serial(benchmark::State& state) {
  const Fixture f(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)), static_cast<std::uint64_t>(state.range(2)));
  const MlpProblem P(f.oc.problem, f.ref, f.cfg);
  const Vec x = Vec::Constant(f.oc.dim, 0.4);
  std::uint64_t seed = 0;
  std::uint64_t calls = 0;
  for (auto _ : state) {
    const Replicate r = mlp_replicate_serial(P, RngKey::root(++seed), 0.0, x);
    benchmark::DoNotOptimize(r.value);
    calls += r.sampler_calls;
  }
  state.counters["tuples/s"] = benchmark::Counter(static_cast<double>(calls), benchmark::Counter::kIsRate);
}

// d, level, M, workers
BENCHMARK(BM_Parallel)->Args({2, 3, 48, 1})->Args({2, 3, 48, 0})->Args({5, 2, 96, 0})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Serial)->Args({2, 3, 48})->Args({5, 2, 96})->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
