#include "rmlp/validation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rmlp/exact_sampler.hpp"
#include "rmlp/mlp.hpp"
#include "rmlp/picard.hpp"
#include "rmlp/pss.hpp"
#include "rmlp/skorokhod.hpp"

namespace rmlp {

namespace {

OpenChainSpec benchmark(double ca = 1.0) { return build_open_chain(2, ca, Vec::Ones(2), 0.2); }

bool same_bits(const Replicate& a, const Replicate& b) {
  return a.value == b.value && a.gradient == b.gradient && a.sampler_calls == b.sampler_calls;
}

double rel(double a, double b) { return std::fabs(a - b) / std::max(std::fabs(b), 1e-300); }

}  // namespace

CheckResult check_determinism(const ValidationOptions& o) {
  CheckResult r{"determinism", true, ""};
  std::ostringstream msg;
  const OpenChainSpec oc = benchmark();
  const Vec x = Vec::Constant(2, 0.4);
  const RngKey key = RngKey::root(o.seed, 0);

  struct Case {
    const char* name;
    ReferenceProcess ref;
    MlpConfig cfg;
  };
  std::vector<Case> cases;
  {
    MlpConfig c;
    c.level = 3;
    c.branch_base = o.quick ? 4 : 6;
    c.variance_reduced = true;
    cases.push_back({"exact", independent_rbm_reference(oc.problem), c});
  }
  {
    MlpConfig c;
    c.level = 2;
    c.branch_base = o.quick ? 3 : 4;
    c.backend = Backend::euler(10);
    cases.push_back({"euler", switching_curve_reference(1.0, oc.problem.drift_base, 10), c});
  }

  for (const auto& cs : cases) {
    const MlpProblem P(oc.problem, cs.ref, cs.cfg);
    const Replicate base = mlp_replicate(P, key, 0.0, x, 1);
    for (int w = 1; w <= o.max_workers; w *= 2) {
      for (int rerun = 0; rerun < 2; ++rerun) {
        const Replicate other = mlp_replicate(P, key, 0.0, x, w);
        if (!same_bits(base, other)) {
          r.passed = false;
          msg << cs.name << ": workers=" << w << " differs; ";
        }
      }
    }
    const Replicate serial = mlp_replicate_serial(P, key, 0.0, x);
    double worst = rel(serial.value, base.value);
    for (int j = 0; j < 2; ++j) worst = std::max(worst, rel(serial.gradient(j), base.gradient(j)));
    if (worst > 1e-10 || serial.sampler_calls != base.sampler_calls) {
      r.passed = false;
      msg << cs.name << ": serial differs (rel " << worst << "); ";
    }
    msg << cs.name << " value " << base.value << " serial rel " << worst << "; ";
  }
  r.detail = msg.str();
  return r;
}

CheckResult check_weight_mean_zero(const ValidationOptions& o) {
  CheckResult r{"weight-mean-zero", true, ""};
  const OpenChainSpec oc = benchmark();
  const ExactTupleSampler sampler(oc.problem);
  const long n = o.quick ? 100000 : 1000000;
  const RngKey key = RngKey::root(o.seed, 1).child(0, 0, 3);
  const double x[2] = {0.4, 0.4};
  double sum[2] = {0, 0}, sq[2] = {0, 0};
  double z[2], w[2];
  for (long m = 0; m < n; ++m) {
    RngStream rng(key, static_cast<u64>(m));
    sampler.draw(rng, 0.0, x, z, w);
    for (int j = 0; j < 2; ++j) {
      sum[j] += w[j];
      sq[j] += w[j] * w[j];
    }
  }
  std::ostringstream msg;
  for (int j = 0; j < 2; ++j) {
    const double mean = sum[j] / static_cast<double>(n);
    const double sd = std::sqrt(std::max(0.0, sq[j] / static_cast<double>(n) - mean * mean));
    const double bound = 4.0 * sd / std::sqrt(static_cast<double>(n));
    if (!(std::fabs(mean) <= bound)) r.passed = false;
    msg << "V" << j + 1 << " mean " << mean << " bound " << bound << "; ";
  }
  r.detail = msg.str();
  return r;
}

CheckResult check_complementarity(const ValidationOptions& o) {
  CheckResult r{"complementarity", true, ""};
  std::ostringstream msg;
  const OpenChainSpec oc = benchmark(5.0);
  const RngKey key = RngKey::root(o.seed, 2);
  const int paths = o.quick ? 200 : 2000;

  // Euler reference paths under the switching-curve drift.
  {
    const ReferenceProcess ref = switching_curve_reference(5.0, oc.problem.drift_base);
    double worst = 0.0;
    bool ok = true;
    const int steps = 200;
    const double dt = oc.horizon / steps;
    for (int p = 0; p < paths; ++p) {
      RngStream rng(key.child(1, 0, 0), static_cast<u64>(p));
      Vec z = Vec::Constant(2, 0.2 * (p % 5));
      DerivativeState D = DerivativeState::identity(2);
      double resid = 0.0;
      for (int k = 0; k < steps; ++k) {
        Vec dW(2);
        dW << rng.normal() * std::sqrt(dt), rng.normal() * std::sqrt(dt);
        const EulerStep st = euler_reference_step(z, D, ref.drift(z), ref.jacobian(z), oc.problem.sigma, dW, dt);
        for (int j = 0; j < 2; ++j) {
          if (st.state(j) > 0.0) resid += st.dY(j);
          if (st.state(j) < 0.0 || st.dY(j) < 0.0) ok = false;
          if (st.state(j) == 0.0 && st.deriv.matrix.row(j).cwiseAbs().maxCoeff() != 0.0) ok = false;
        }
        z = st.state;
        D = st.deriv;
      }
      worst = std::max(worst, resid);
    }
    if (worst > 1e-12 || !ok) r.passed = false;
    msg << "euler residual " << worst << "; ";
  }

  // Least-control paths on the grid rule.
  {
    const OpenChainSpec lc = build_open_chain(3, 1.0, Vec::Ones(3), 0.2);
    double worst = 0.0;
    bool ok = true;
    for (int p = 0; p < paths / 10; ++p) {
      RngStream rng(key.child(2, 0, 0), static_cast<u64>(p));
      const auto path = least_control_path(rng, lc, 0.0, Vec::Constant(3, 0.1 * (p % 4)), 1e-3, MinimumRule::grid);
      for (std::size_t k = 1; k < path.states.size(); ++k) {
        for (int j = 0; j < 3; ++j) {
          const double dy = path.regulator[k](j) - path.regulator[k - 1](j);
          if (dy < 0.0 || path.states[k](j) < 0.0) ok = false;
          if (path.states[k](j) > 0.0) worst = std::max(worst, dy);
        }
      }
    }
    if (worst > 1e-12 || !ok) r.passed = false;
    msg << "least-control residual " << worst << "; ";
  }

  // Oblique map: sum_k sum_j state_j dg_j.
  {
    Mat R(2, 2);
    R << 1.0, -0.5, -0.5, 1.0;
    double worst = 0.0;
    for (int p = 0; p < paths / 10; ++p) {
      RngStream rng(key.child(3, 0, 0), static_cast<u64>(p));
      std::vector<Vec> f(1, Vec::Constant(2, 0.5));
      for (int k = 0; k < 200; ++k) {
        Vec step(2);
        step << -0.01 + 0.1 * rng.normal(), -0.01 + 0.1 * rng.normal();
        f.push_back(f.back() + step);
      }
      const DiscretePath out = skorokhod_map_orthant(f, R);
      double resid = 0.0;
      for (std::size_t k = 1; k < out.states.size(); ++k) {
        resid += out.states[k].cwiseMax(0.0).dot(out.regulator[k] - out.regulator[k - 1]);
        if ((out.states[k].array() < -1e-10).any()) resid = std::max(resid, 1.0);
      }
      worst = std::max(worst, resid);
    }
    if (worst > 1e-10) r.passed = false;
    msg << "oblique residual " << worst;
  }
  r.detail = msg.str();
  return r;
}

CheckResult check_picard_contraction(const ValidationOptions& o) {
  CheckResult r{"picard-contraction", true, ""};
  const OpenChainSpec oc = benchmark(1.0);
  const ReferenceProcess ref = independent_rbm_reference(oc.problem);
  const PicardResult res = picard_reference_iteration(oc.problem, ref, 0.0, Vec::Constant(2, 0.4), 6,
                                                      o.quick ? 1000 : 4000, o.seed,
                                                      default_picard_grid(oc.horizon), o.max_workers);
  std::ostringstream msg;
  for (std::size_t i = 0; i < res.iterates.size(); ++i) {
    msg << "k=" << res.iterates[i].k << " diff " << res.iterates[i].diff_norm;
    if (i >= 1) msg << " ratio " << res.ratios[i];
    msg << "; ";
    if (i >= 2 && !(res.ratios[i] < 1.0)) r.passed = false;
  }
  r.detail = msg.str();
  return r;
}

CheckResult check_call_counts(const ValidationOptions& o) {
  CheckResult r{"call-count", true, ""};
  std::ostringstream msg;
  const OpenChainSpec oc = benchmark();
  const ReferenceProcess ref = independent_rbm_reference(oc.problem);
  const Vec x = Vec::Constant(2, 0.4);
  const int top = o.quick ? 3 : 4;
  for (std::uint64_t M : {1ULL, 2ULL, 5ULL}) {
    for (int n = 1; n <= top; ++n) {
      MlpConfig cfg;
      cfg.level = n;
      cfg.branch_base = M;
      const MlpProblem P(oc.problem, ref, cfg);
      const Replicate rep = mlp_replicate(P, RngKey::root(o.seed, 3), 0.0, x, o.max_workers);
      const double bound = 5.0 * std::pow(3.0 * static_cast<double>(M), n);
      const std::uint64_t want = expected_sampler_calls(n, M);
      if (rep.sampler_calls != want || static_cast<double>(rep.sampler_calls) > bound) {
        r.passed = false;
        msg << "n=" << n << " M=" << M << " calls " << rep.sampler_calls << " expected " << want << " bound "
            << bound << "; ";
      }
    }
  }
  if (r.passed) msg << "all counts exact and within 5(3M)^n";
  r.detail = msg.str();
  return r;
}

std::vector<CheckResult> run_validation(const ValidationOptions& o) {
  return {check_determinism(o), check_weight_mean_zero(o), check_complementarity(o), check_picard_contraction(o),
          check_call_counts(o)};
}

}  // namespace rmlp
