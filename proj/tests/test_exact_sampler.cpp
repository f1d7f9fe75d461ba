#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "rmlp/errors.hpp"
#include "rmlp/exact_sampler.hpp"
#include "rmlp/pss.hpp"

using namespace rmlp;

namespace {

RngStream stream(std::uint64_t seed, std::uint64_t lane) { return RngStream(RngKey::root(seed), lane); }

template <class F>
std::vector<double> draws(long n, std::uint64_t seed, F f) {
  std::vector<double> out(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) {
    RngStream s = stream(seed, static_cast<u64>(i));
    out[static_cast<std::size_t>(i)] = f(s);
  }
  return out;
}

// Frozen high-precision values of the reflected-Brownian-motion transition law
// (gamma = -1, sigma = 1, t = 0.2), computed once with mpmath from the closed-form density.
constexpr double kRbm0Mean = 0.268601718260390;
constexpr double kRbm0Var = 0.0508102090165211;
constexpr double kRbm04Mean = 0.359652974595646;
constexpr double kRbm04Var = 0.0866139427854251;
constexpr double kIgCdf025 = 0.668102001223170606;  // x = 0.5, gamma = -2, sigma = 1

}  // namespace

TEST_SUITE("exact-sampler") {
  TEST_CASE("normalizing constant") {
    CHECK(normalizing_constant(0.0, 0.25) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(normalizing_constant(0.0, 0.04) == doctest::Approx(0.4).epsilon(1e-15));
    const double want = std::sqrt(oracle::kPi) * (1.0 - 2.0 * oracle::phi(-std::sqrt(20.0)));
    CHECK(normalizing_constant(1.0, 10.0) == doctest::Approx(want).epsilon(1e-12));
    CHECK(normalizing_constant(1.0, 10.0) == doctest::Approx(1.7724401246392806).epsilon(1e-13));
    CHECK(normalizing_constant(1.0, 1e6) == doctest::Approx(std::sqrt(oracle::kPi)).epsilon(1e-12));
    CHECK_THROWS_AS(normalizing_constant(0.0, 0.0), rmlp::invalid_argument);
  }

  TEST_CASE("random time law, beta = 0") {
    auto s = draws(200000, 1, [](RngStream& r) { return sample_random_time(r, 0.0, 0.2, 0.0); });
    for (double v : s) REQUIRE((v > 0.0 && v < 0.2));
    std::nth_element(s.begin(), s.begin() + 100000, s.end());
    CHECK(s[100000] == doctest::Approx(0.05).epsilon(0.02));
    const auto below = std::count_if(s.begin(), s.end(), [](double v) { return v < 0.05; });
    CHECK(std::fabs(below / 200000.0 - 0.5) < 4 * 0.5 / std::sqrt(200000.0));
    RngStream r = stream(1, 0);
    CHECK_THROWS_AS(sample_random_time(r, 0.2, 0.2, 0.0), rmlp::invalid_argument);
  }

  TEST_CASE("random time law, beta > 0 matches the density ratio") {
    // P(S - t < u) = erf(sqrt(beta u)) / erf(sqrt(beta Delta))
    const double beta = 3.0, t = 0.1, T = 1.1;
    const auto s = draws(200000, 2, [&](RngStream& r) { return sample_random_time(r, t, T, beta); });
    for (double u : {0.01, 0.1, 0.4, 0.8}) {
      const double want = oracle::erf_series(std::sqrt(beta * u)) / oracle::erf_series(std::sqrt(beta * (T - t)));
      const double got = std::count_if(s.begin(), s.end(), [&](double v) { return v - t < u; }) / 200000.0;
      CHECK(std::fabs(got - want) < 4 * std::sqrt(want * (1 - want) / 200000.0) + 1e-9);
    }
  }

  TEST_CASE("hitting time moments, x = 1, gamma = -1") {
    const auto s = draws(1000000, 3, [](RngStream& r) { return sample_hitting_time(r, 1.0, -1.0, 1.0); });
    const auto m = oracle::moments(s);
    CHECK(std::fabs(m.mean - 1.0) < 4 * m.se());
    CHECK(m.var == doctest::Approx(1.0).epsilon(0.03));
  }

  TEST_CASE("hitting time CDF against quadrature of the density") {
    CHECK(oracle::hitting_cdf(0.25, 0.5, -2.0, 1.0) == doctest::Approx(kIgCdf025).epsilon(1e-9));
    const auto s = draws(100000, 4, [](RngStream& r) { return sample_hitting_time(r, 0.5, -2.0, 1.0); });
    CHECK(oracle::ks_hitting(s, 0.5, -2.0, 1.0) <= 0.01);
    const double below = std::count_if(s.begin(), s.end(), [](double v) { return v <= 0.25; }) / 100000.0;
    CHECK(std::fabs(below - kIgCdf025) < 4 * std::sqrt(kIgCdf025 * (1 - kIgCdf025) / 100000.0));
  }

  TEST_CASE("driftless hitting time follows the Levy law") {
    const auto s = draws(100000, 5, [](RngStream& r) { return sample_hitting_time(r, 0.7, 0.0, 1.3); });
    CHECK(oracle::ks_hitting(s, 0.7, 0.0, 1.3) <= 0.01);
  }

  TEST_CASE("hitting time errors") {
    RngStream r = stream(6, 0);
    CHECK_THROWS_AS(sample_hitting_time(r, 0.0, -1.0, 1.0), degenerate_input);
    CHECK_THROWS_AS(sample_hitting_time(r, -1.0, -1.0, 1.0), degenerate_input);
  }

  TEST_CASE("RBM from zero") {
    const auto s = draws(1000000, 7, [](RngStream& r) { return sample_rbm_marginal_from_zero(r, 1.0, 0.0, 1.0); });
    for (double v : s) REQUIRE(v >= 0.0);
    const auto m = oracle::moments(s);
    CHECK(std::fabs(m.mean - std::sqrt(2.0 / oracle::kPi)) < 4 * m.se());
    CHECK(m.mean == doctest::Approx(std::sqrt(2.0 / oracle::kPi)).epsilon(0.005));

    const auto d = draws(1000000, 8, [](RngStream& r) { return sample_rbm_marginal_from_zero(r, 0.2, -1.0, 1.0); });
    const auto md = oracle::moments(d);
    CHECK(std::fabs(md.mean - kRbm0Mean) < 4 * md.se());
    CHECK(md.var == doctest::Approx(kRbm0Var).epsilon(0.01));

    RngStream r = stream(9, 0);
    CHECK_THROWS_AS(sample_rbm_marginal_from_zero(r, 0.0, -1.0, 1.0), rmlp::invalid_argument);
  }

  TEST_CASE("RBM from zero against a reflected Euler oracle") {
    const auto ex = draws(200000, 10, [](RngStream& r) { return sample_rbm_marginal_from_zero(r, 0.2, -1.0, 1.0); });
    const auto eu = oracle::euler_rbm(0.0, -1.0, 1.0, 0.2, 10000, 20000, 99);
    const auto a = oracle::moments(ex), b = oracle::moments(eu);
    CHECK(std::fabs(a.mean - b.mean) < 3 * std::hypot(a.se(), b.se()));
  }

  TEST_CASE("meander endpoints and second moment") {
    RngStream r = stream(11, 0);
    CHECK(sample_meander_at(r, 1e-12, 1.0, 0.8, 1.0) == doctest::Approx(0.8).epsilon(1e-5));
    double far = 0;
    for (int i = 0; i < 1000; ++i) far = std::max(far, sample_meander_at(r, 1.0 - 1e-10, 1.0, 0.8, 1.0));
    CHECK(far < 1e-3);

    const auto s = draws(1000000, 12, [](RngStream& q) {
      const double z = sample_meander_at(q, 0.5, 1.0, 1.0, 1.0);
      return z * z;
    });
    const auto m = oracle::moments(s);
    CHECK(std::fabs(m.mean - 1.0) < 4 * m.se());
    CHECK(m.mean == doctest::Approx(1.0).epsilon(0.01));
    CHECK_THROWS_AS(sample_meander_at(r, 1.0, 1.0, 1.0, 1.0), rmlp::invalid_argument);
  }

  TEST_CASE("meander against rejection sampling of Brownian paths") {
    // Paths from 1 with no drift, kept when the first grid crossing of 0 falls in [0.9, 1.1].
    std::mt19937_64 gen(2024);
    std::normal_distribution<double> N;
    const int steps = 1200, half = 500;
    const double dt = 1e-3;
    std::vector<double> kept;
    while (kept.size() < 4000) {
      double b = 1.0, at_half = 0.0;
      for (int k = 1; k <= steps; ++k) {
        b += std::sqrt(dt) * N(gen);
        if (k == half) at_half = b;
        if (b <= 0.0) {
          const double tau = k * dt;
          if (tau >= 0.9 && tau <= 1.1) kept.push_back(at_half * at_half);
          break;
        }
      }
    }
    // meander with tau drawn uniformly over the same window, weighting ignored (the window is narrow)
    RngStream r = stream(13, 0);
    std::vector<double> mz;
    for (int i = 0; i < 200000; ++i) {
      const double tau = 0.9 + 0.2 * r.uniform();
      const double z = sample_meander_at(r, 0.5, tau, 1.0, 1.0);
      mz.push_back(z * z);
    }
    const auto a = oracle::moments(kept), b = oracle::moments(mz);
    CHECK(std::fabs(a.mean - b.mean) < 3 * std::hypot(a.se(), b.se()) + 0.03);
  }

  TEST_CASE("coordinate triple cases") {
    RngStream r = stream(14, 0);
    for (int i = 0; i < 1000; ++i) {
      const auto c0 = sample_coordinate_triple(r, 0.05, 0.15, 0.0, -1.0, 1.0);
      CHECK(c0.tau == 0.05);
      CHECK(c0.b_at_tau_min_s == 0.0);
      CHECK(c0.z_at_s >= 0.0);

      const double x = 0.3, g = -1.0, sig = 0.8, t = 0.05, s = 0.15;
      const auto c = sample_coordinate_triple(r, t, s, x, g, sig);
      CHECK(c.z_at_s >= 0.0);
      if (c.tau > s) {
        CHECK(c.z_at_s > 0.0);
        CHECK(c.z_at_s == doctest::Approx(x + g * (s - t) + sig * c.b_at_tau_min_s).epsilon(1e-12));
      } else {
        CHECK(c.b_at_tau_min_s == doctest::Approx(-(x + g * (c.tau - t)) / sig).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("triple marginal matches the RBM law from x = 0.4") {
    const auto s = draws(1000000, 15, [](RngStream& q) {
      return sample_coordinate_triple(q, 0.0, 0.2, 0.4, -1.0, 1.0).z_at_s;
    });
    const auto m = oracle::moments(s);
    CHECK(std::fabs(m.mean - kRbm04Mean) < 3 * m.se());
    CHECK(m.var == doctest::Approx(kRbm04Var).epsilon(0.01));
    const auto eu = oracle::euler_rbm(0.4, -1.0, 1.0, 0.2, 10000, 20000, 77);
    const auto e = oracle::moments(eu);
    CHECK(std::fabs(m.mean - e.mean) < 3 * std::hypot(m.se(), e.se()));
    CHECK(std::fabs(e.mean - kRbm04Mean) < 3 * e.se());
  }

  TEST_CASE("assembled tuple: weights, bounds, determinism") {
    const auto oc = build_open_chain(2, 1.0, Vec::Ones(2));
    const ReferenceProcess ref = independent_rbm_reference(oc.problem);
    const Vec x = Vec::Constant(2, 0.4);
    const long n = 400000;
    double m[2] = {0, 0}, sq[2] = {0, 0}, early[2] = {0, 0};
    long n_early = 0;
    for (long i = 0; i < n; ++i) {
      RngStream r = stream(16, static_cast<u64>(i));
      const SampleTuple tp = assemble_tuple(r, oc.problem, ref, 0.0, x);
      REQUIRE_FALSE(tp.has_pushing);
      REQUIRE_FALSE(tp.has_terminal);
      for (int j = 0; j < 2; ++j) {
        m[j] += tp.v_s(j);
        sq[j] += tp.v_s(j) * tp.v_s(j);
        if (tp.s < 0.05) early[j] += tp.v_s(j);
      }
      if (tp.s < 0.05) ++n_early;
    }
    for (int j = 0; j < 2; ++j) {
      const double mean = m[j] / n, var = sq[j] / n - mean * mean;
      CHECK(std::fabs(mean) < 4 * std::sqrt(var / n));
      CHECK(sq[j] / n <= 1.0 + 3 * std::sqrt(2.0 / n));  // E V^2 <= 1 / sigma^2
      CHECK(std::fabs(early[j] / n_early) < 4 * std::sqrt(1.0 / n_early));
    }

    RngStream a = stream(17, 5), b = stream(17, 5);
    const SampleTuple ta = assemble_tuple(a, oc.problem, ref, 0.0, x), tb = assemble_tuple(b, oc.problem, ref, 0.0, x);
    CHECK(ta.s == tb.s);
    CHECK(ta.z_s == tb.z_s);
    CHECK(ta.v_s == tb.v_s);
  }

  TEST_CASE("exact backend rejects what it cannot simulate") {
    auto oc = build_open_chain(2, 1.0, Vec::Ones(2));
    RngStream r = stream(18, 0);
    CHECK_THROWS_AS(assemble_tuple(r, oc.problem, constant_drift_reference(oc.problem), 0.0, Vec::Ones(2)),
                    unsupported_configuration);
    auto pushing = oc.problem;
    pushing.pushing_penalty = Vec::Ones(2);
    CHECK_THROWS_AS(check_exact_supported(pushing), unsupported_configuration);
    auto terminal = oc.problem;
    terminal.terminal_cost = TerminalCost::linear_in(Vec::Ones(2));
    CHECK_THROWS_AS(check_exact_supported(terminal), unsupported_configuration);
    auto oblique = oc.problem;
    oblique.reflection << 1.0, -0.5, 0.0, 1.0;
    CHECK_THROWS_AS(check_exact_supported(oblique), unsupported_configuration);
    CHECK_NOTHROW(check_exact_supported(oc.problem));
  }
}
