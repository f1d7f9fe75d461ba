#include <cmath>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "rmlp/errors.hpp"
#include "rmlp/mlp.hpp"
#include "rmlp/pss.hpp"

using namespace rmlp;

namespace {

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

// E_x[Z(t)] for a unit-variance RBM with drift mu, from its transition density
double rbm_mean(double x, double mu, double t) {
  const double r = std::sqrt(t);
  auto pdf = [](double z) { return std::exp(-0.5 * z * z) / std::sqrt(2 * oracle::kPi); };
  auto dens = [&](double y) {
    const double a = (y - x - mu * t) / r, b = (y + x + mu * t) / r;
    return pdf(a) / r + std::exp(2 * mu * y) * pdf(b) / r -
           2 * mu * std::exp(2 * mu * y) * 0.5 * std::erfc(b / std::sqrt(2.0));
  };
  return oracle::simpson([&](double y) { return y * dens(y); }, 0.0, x + 12 * r + 1, 4000);
}

GridEstimate est(double x1, double x2, double d1, double d2) { return {v2(x1, x2), v2(d1, d2)}; }

}  // namespace

TEST_SUITE("pss") {
  TEST_CASE("control matrix shapes") {
    const auto s2 = build_open_chain(2, 1.0, Vec::Ones(2)).problem;
    CHECK(s2.control_matrix.rows() == 2);
    CHECK(s2.control_matrix.cols() == 1);
    CHECK(s2.control_matrix(0, 0) == 1.0);
    CHECK(s2.control_matrix(1, 0) == -1.0);

    const auto s5 = build_open_chain(5, 1.0, Vec::Ones(5)).problem;
    CHECK(s5.control_matrix.rows() == 5);
    CHECK(s5.control_matrix.cols() == 4);
    for (int k = 0; k < 4; ++k)
      for (int i = 0; i < 5; ++i) CHECK(s5.control_matrix(i, k) == (i == k ? 1.0 : i == k + 1 ? -1.0 : 0.0));

    const auto oc20 = build_open_chain(20, 2.0, Vec::Ones(20));
    CHECK(oc20.problem.control_dim == 19);
    CHECK(oc20.problem.drift_base == Vec::Constant(20, -1.0));
    CHECK(oc20.problem.sigma == Mat::Identity(20, 20));
    CHECK(oc20.horizon == 0.2);

    CHECK_THROWS_AS(build_open_chain(1, 1.0, Vec::Ones(1)), rmlp::invalid_argument);
    CHECK_THROWS_AS(build_open_chain(2, -1.0, Vec::Ones(2)), rmlp::invalid_argument);
    CHECK_THROWS_AS(build_open_chain(3, 1.0, Vec::Ones(2)), rmlp::invalid_argument);
  }

  TEST_CASE("least-control optimality check") {
    CHECK(lc_optimality_check(v2(1, 1)));
    CHECK_FALSE(lc_optimality_check(v2(1, 2)));
    CHECK(lc_optimality_check((Vec(5) << 5, 4, 3, 2, 1).finished()));
    CHECK_FALSE(lc_optimality_check((Vec(5) << 1, 2, 3, 4, 5).finished()));
  }

  TEST_CASE("rbm mean oracle matches the frozen value") {
    CHECK(rbm_mean(0.4, -1.0, 0.2) == doctest::Approx(0.359652974595646).epsilon(1e-7));
    CHECK(rbm_mean(0.0, -1.0, 0.2) == doctest::Approx(0.268601718260390).epsilon(1e-7));
  }

  TEST_CASE("zero holding cost gives zero baseline") {
    const auto oc = build_open_chain(3, 1.0, Vec::Zero(3));
    const auto r = least_control_cost(RngKey::root(1), oc, 0.0, Vec::Constant(3, 0.3), 1e-3, 100);
    CHECK(r.mean == 0.0);
    CHECK(r.stderr_ == 0.0);
    CHECK(r.paths == 100);
  }

  TEST_CASE("first coordinate of the baseline is a free RBM") {
    // h = (1, 0): cost = int_0^T E[Z1(s)] ds
    const auto oc = build_open_chain(2, 1.0, v2(1, 0));
    const double want = oracle::simpson([](double s) { return s == 0.0 ? 0.4 : rbm_mean(0.4, -1.0, s); }, 0.0, 0.2, 40);
    const auto r = least_control_cost(RngKey::root(2), oc, 0.0, v2(0.4, 0.4), 1e-3, 20000, MinimumRule::bridge);
    MESSAGE(r.mean << " +- " << r.stderr_ << " vs " << want);
    CHECK(std::fabs(r.mean - want) < 4 * r.stderr_);
  }

  TEST_CASE("baseline at the origin") {
    const auto oc = build_open_chain(2, 1.0, Vec::Ones(2));
    const auto r = least_control_cost(RngKey::root(3), oc, 0.0, v2(0, 0), 1e-4, 4000);
    CHECK(r.dt == 1e-4);
    CHECK(std::fabs(r.mean - 0.067109) < 4 * r.stderr_);
    CHECK_THROWS_AS(least_control_cost(RngKey::root(3), oc, 0.0, v2(0, 0), 0.0, 10), rmlp::invalid_argument);
    CHECK_THROWS_AS(least_control_cost(RngKey::root(3), oc, 0.0, v2(0, 0), 1e-3, 1), rmlp::invalid_argument);
  }

  TEST_CASE("least-control path invariants") {
    const auto oc = build_open_chain(4, 1.0, Vec::Ones(4));
    RngStream rng(RngKey::root(4));
    for (int p = 0; p < 50; ++p) {
      const auto path = least_control_path(rng, oc, 0.0, Vec::Constant(4, 0.1), 1e-3, MinimumRule::grid);
      REQUIRE(path.states.size() == 201);
      double resid = 0.0;
      for (std::size_t k = 1; k < path.states.size(); ++k) {
        CHECK((path.states[k].array() >= 0.0).all());
        const Vec dy = path.regulator[k] - path.regulator[k - 1];
        CHECK((dy.array() >= 0.0).all());
        for (int i = 0; i < 4; ++i)
          if (path.states[k](i) > 0.0) resid += dy(i);
      }
      CHECK(resid == 0.0);
    }
    RngStream b(RngKey::root(5));
    for (int p = 0; p < 50; ++p) {
      const auto path = least_control_path(b, oc, 0.05, Vec::Constant(4, 0.1), 1e-3, MinimumRule::bridge);
      CHECK(path.states.size() == 151);
      for (const Vec& z : path.states) CHECK((z.array() >= 0.0).all());
    }
  }

  TEST_CASE("least control bounds the controlled value from below") {
    const auto oc = build_open_chain(2, 1.0, Vec::Ones(2));
    const auto ref = independent_rbm_reference(oc.problem);
    MlpConfig c;
    c.level = 3;
    c.branch_base = 32;
    c.replicates = 5;
    c.variance_reduced = true;
    for (const Vec& x : {v2(0, 0), v2(0.4, 0.4), v2(1, 0.2)}) {
      const auto lc = least_control_cost(RngKey::root(6), oc, 0.0, x, 1e-4, 4000);
      const auto e = mlp_estimate(oc.problem, ref, c, 0.0, x, 7);
      const double se = *e.value_summary.std / std::sqrt(5.0);
      MESSAGE("x = (" << x(0) << ", " << x(1) << "): least control " << lc.mean << ", mlp " << e.value);
      CHECK(lc.mean <= e.value + 3 * std::hypot(lc.stderr_, se));
    }
  }

  TEST_CASE("switching-curve reference") {
    const auto ref = switching_curve_reference(3.0, Vec::Zero(2));
    CHECK_FALSE(ref.constant);
    CHECK(ref.backend.kind == BackendKind::euler);
    const Vec b = ref.drift(v2(1.0, 0.5));  // on the curve 2 x2 = x1
    CHECK(b(0) == doctest::Approx(1.5).epsilon(1e-15));
    CHECK(b(1) == doctest::Approx(-1.5).epsilon(1e-15));
    const Vec shifted = switching_curve_reference(3.0, v2(-1, -1)).drift(v2(1.0, 0.5));
    CHECK(shifted(0) == doctest::Approx(0.5));
    CHECK(shifted(1) == doctest::Approx(-2.5));
    const Mat J = ref.jacobian(v2(1.0, 0.5));
    CHECK(J(0, 0) == doctest::Approx(-1.5));
    CHECK(J(0, 1) == doctest::Approx(3.0));
    CHECK(J(1, 0) == doctest::Approx(1.5));
    CHECK(J(1, 1) == doctest::Approx(-3.0));
    CHECK_THROWS_AS(switching_curve_reference(1.0, Vec::Zero(3)), rmlp::invalid_argument);
    CHECK_THROWS_AS(switching_curve_reference(1.0, Vec::Zero(2), 0), rmlp::invalid_argument);
  }

  TEST_CASE("policy grid labels and absent cells") {
    const auto spec = build_open_chain(2, 1.0, v2(1, 2)).problem;
    std::vector<GridEstimate> e{est(0, 1, 0.1, 0.3), est(1, 0, 0.4, 0.2), est(0.5, 0.5, 0.2, 0.2), {v2(0.3, 0.3), std::nullopt}};
    const auto cells = policy_grid(e, spec);
    REQUIRE(cells.size() == 4);
    CHECK(cells[0].label == "+");
    CHECK(cells[0].diff == doctest::Approx(-0.2));
    CHECK(cells[1].label == "x");
    CHECK(cells[1].d1 == 0.4);
    CHECK(cells[1].d2 == 0.2);
    CHECK(cells[2].label == "+");
    CHECK(cells[2].diff == 0.0);
    CHECK_FALSE(cells[3].present);
    CHECK(cells[3].label == "absent");
    CHECK(cells[3].x1 == 0.3);
    CHECK_THROWS_AS(policy_grid(e, build_open_chain(3, 1.0, Vec::Ones(3)).problem), rmlp::invalid_argument);
  }

  TEST_CASE("switching violations") {
    const auto spec = build_open_chain(2, 1.0, v2(1, 2)).problem;
    // column x1 = 0: idle, idle, serve, serve going up; column x1 = 1: serve, idle, serve
    std::vector<GridEstimate> e{est(0, 0, 1, 0), est(0, 0.1, 1, 0), est(0, 0.2, 0, 1), est(0, 0.3, 0, 1),
                                est(1, 0, 0, 1), est(1, 0.1, 1, 0), est(1, 0.2, 0, 1)};
    CHECK(switching_violations(policy_grid(e, spec)) == 1);
    e.pop_back();
    e.pop_back();
    e.pop_back();
    CHECK(switching_violations(policy_grid(e, spec)) == 0);
    e.push_back({v2(0, 0.4), std::nullopt});
    CHECK(switching_violations(policy_grid(e, spec)) == 0);
    e.push_back(est(0, 0.5, 1, 0));
    e.push_back(est(0, 0.6, 1, 0));
    CHECK(switching_violations(policy_grid(e, spec)) == 2);
  }
}
