#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>


#include "CLI11.hpp"
#include "rmlp/errors.hpp"
#include "rmlp/exact_sampler.hpp"
#include "rmlp/harness.hpp"
#include "rmlp/mlp.hpp"
#include "rmlp/picard.hpp"
#include "rmlp/pss.hpp"
#include "rmlp/skorokhod.hpp"
#include "rmlp/validation.hpp"

using namespace rmlp;

namespace {

struct Global {
  std::uint64_t seed = 1;
  int workers = 0;
  std::string out_dir;
};

struct ProblemFlags {
  int d = 2;
  std::vector<double> x;
  std::vector<double> h;
  double ca = 1.0;
  double T = 0.2;
  double beta = 0.0;
  double t = 0.0;

  void add(CLI::App* app, bool with_state = true) {
    app->add_option("--d", d, "state dimension")->check(CLI::Range(2, 1000));
    if (with_state) app->add_option("--x", x, "initial state, comma separated")->delimiter(',');
    app->add_option("--h", h, "holding costs, comma separated (default all ones)")->delimiter(',');
    app->add_option("--ca", ca, "action bound C_A");
    app->add_option("--T", T, "horizon");
    app->add_option("--beta", beta, "discount rate");
    app->add_option("--t", t, "start time");
  }

  Vec holding() const {
    if (h.empty()) return Vec::Ones(d);
    if (static_cast<int>(h.size()) != d) throw invalid_argument("--h needs " + std::to_string(d) + " entries");
    return Eigen::Map<const Vec>(h.data(), d);
  }

  Vec state() const {
    if (x.empty()) return Vec::Zero(d);
    if (static_cast<int>(x.size()) == 1) return Vec::Constant(d, x[0]);
    if (static_cast<int>(x.size()) != d) throw invalid_argument("--x needs 1 or " + std::to_string(d) + " entries");
    return Eigen::Map<const Vec>(x.data(), d);
  }

  OpenChainSpec chain() const {
    OpenChainSpec oc = build_open_chain(d, ca, holding(), T);
    oc.problem.discount = beta;
    oc.problem.validate();
    return oc;
  }
};

struct EstimatorFlags {
  int level = 1;
  std::uint64_t M = 1000;
  int replicates = 5;
  std::string backend = "exact";
  int steps = 50;
  std::string rule = "projection";
  std::string reference = "constant";
  bool vanilla = false;

  void add(CLI::App* app) {
    app->add_option("--level", level, "MLP level n")->check(CLI::NonNegativeNumber);
    app->add_option("--M", M, "branching base M")->check(CLI::PositiveNumber);
    app->add_option("--replicates", replicates, "independent replicates")->check(CLI::PositiveNumber);
    app->add_option("--backend", backend, "exact or euler")->check(CLI::IsMember({"exact", "euler"}));
    app->add_option("--steps", steps, "Euler steps per interval")->check(CLI::PositiveNumber);
    app->add_option("--rule", rule, "Euler boundary rule")->check(CLI::IsMember({"projection", "bridge"}));
    app->add_option("--reference", reference, "reference drift")
        ->check(CLI::IsMember({"constant", "switching-curve"}));
    app->add_flag("--vanilla", vanilla, "use the plain level-0 term instead of the variance-reduced one");
  }

  Backend make_backend() const {
    if (backend == "exact") return Backend::exact();
    return Backend::euler(steps, rule == "bridge" ? ReflectionRule::bridge : ReflectionRule::projection);
  }

  ReferenceProcess make_reference(const OpenChainSpec& oc) const {
    const Backend b = make_backend();
    if (reference == "switching-curve") {
      if (b.kind == BackendKind::exact)
        throw unsupported_configuration("the switching-curve reference needs --backend euler");
      ReferenceProcess r = switching_curve_reference(oc.action_bound, oc.problem.drift_base, b.steps);
      r.backend = b;
      return r;
    }
    ReferenceProcess r = b.kind == BackendKind::exact ? independent_rbm_reference(oc.problem)
                                                      : constant_drift_reference(oc.problem, b.steps);
    r.backend = b;
    return r;
  }

  MlpConfig config() const {
    MlpConfig c;
    c.level = level;
    c.branch_base = M;
    c.replicates = replicates;
    c.backend = make_backend();
    c.variance_reduced = !vanilla && reference == "constant";
    return c;
  }
};

std::string pct(const std::optional<double>& p) { return p ? fmt(*p) + "%" : "n/a"; }

std::unique_ptr<std::ostream> open_out(const Global& g, const std::string& name) {
  if (name.empty() || name == "-") return nullptr;
  namespace fs = std::filesystem;
  fs::path p = fs::path(name).is_absolute() || g.out_dir.empty() ? fs::path(name) : fs::path(g.out_dir) / name;
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  auto os = std::make_unique<std::ofstream>(p);
  if (!*os) throw config_error(p.string() + ": cannot open output file");
  return os;
}

std::ostream& out_or_stdout(const std::unique_ptr<std::ostream>& p) { return p ? *p : std::cout; }

void print_estimate(const MlpEstimate& e) {
  std::cout << "value " << fmt(e.value_summary.mean) << " +- " << pct(e.value_summary.percent) << '\n';
  for (std::size_t j = 0; j < e.gradient_summary.size(); ++j)
    std::cout << "grad" << j + 1 << ' ' << fmt(e.gradient_summary[j].mean) << " +- "
              << pct(e.gradient_summary[j].percent) << '\n';
  std::cout << "replicates " << e.per_replicate.size() << "  sampler_calls " << e.sampler_calls() << "  seconds "
            << fmt(e.seconds()) << '\n';
}

int cmd_solve(const Global& g, const ProblemFlags& pf, const EstimatorFlags& ef) {
  const OpenChainSpec oc = pf.chain();
  const ReferenceProcess ref = ef.make_reference(oc);
  const MlpEstimate e = mlp_estimate(oc.problem, ref, ef.config(), pf.t, pf.state(), g.seed, {g.workers});
  print_estimate(e);
  const Vec a = policy_readout(e.gradient, oc.problem);
  std::cout << "policy";
  for (Eigen::Index k = 0; k < a.size(); ++k) std::cout << ' ' << fmt(a(k));
  std::cout << '\n';
  return 0;
}

int cmd_baseline(const Global& g, const ProblemFlags& pf, double dt, long paths, const std::string& rule) {
  const OpenChainSpec oc = pf.chain();
  const BaselineResult b = least_control_cost(RngKey::root(g.seed, 0), oc, pf.t, pf.state(), dt, paths,
                                              rule == "grid" ? MinimumRule::grid : MinimumRule::bridge);
  std::cout << "least-control " << fmt(b.mean) << " stderr " << fmt(b.stderr_) << " paths " << b.paths << " dt "
            << fmt(b.dt) << '\n';
  std::cout << "least-control optimal " << (lc_optimality_check(oc.holding_cost) ? "yes" : "no") << '\n';
  return 0;
}

int cmd_policy_grid(const Global& g, const ProblemFlags& pf, const EstimatorFlags& ef, int n_grid, double step,
                    const std::string& out, const std::string& value_diff, long paths, double dt) {
  if (pf.d != 2) throw invalid_argument("policy-grid is defined for d = 2");
  const OpenChainSpec oc = pf.chain();
  const ReferenceProcess ref = ef.make_reference(oc);
  const MlpConfig cfg = ef.config();
  std::vector<GridEstimate> est;
  std::vector<double> values;
  for (int i = 0; i < n_grid; ++i) {
    for (int j = 0; j < n_grid; ++j) {
      Vec x(2);
      x << step * i, step * j;
      const MlpEstimate e = mlp_estimate(oc.problem, ref, cfg, pf.t, x, g.seed, {g.workers});
      est.push_back({x, e.gradient});
      values.push_back(e.value);
      std::cerr << "state (" << fmt(x(0)) << ", " << fmt(x(1)) << ") d1-d2 " << fmt(e.gradient(0) - e.gradient(1))
                << '\n';
    }
  }
  const auto cells = policy_grid(est, oc.problem);
  auto file = open_out(g, out);
  std::ostream& os = out_or_stdout(file);
  os << "x1,x2,d1,d2,diff,label\n";
  for (const auto& c : cells)
    os << fmt(c.x1) << ',' << fmt(c.x2) << ',' << fmt(c.d1) << ',' << fmt(c.d2) << ',' << fmt(c.diff) << ','
       << c.label << '\n';
  std::cerr << "switching violations " << switching_violations(cells) << '\n';

  if (!value_diff.empty()) {
    auto vf = open_out(g, value_diff);
    std::ostream& vs = out_or_stdout(vf);
    vs << "x1,x2,mlp_value,baseline,baseline_stderr,difference\n";
    for (std::size_t k = 0; k < est.size(); ++k) {
      const BaselineResult b = least_control_cost(RngKey::root(g.seed, 1000 + k), oc, pf.t, est[k].state, dt, paths);
      vs << fmt(est[k].state(0)) << ',' << fmt(est[k].state(1)) << ',' << fmt(values[k]) << ',' << fmt(b.mean) << ','
         << fmt(b.stderr_) << ',' << fmt(values[k] - b.mean) << '\n';
    }
  }
  return 0;
}

struct DiagFlags {
  double x = 1.0;
  double gamma = -1.0;
  double sigma = 1.0;
  double t = 0.0;
  double s = 0.1;
  double tau = 1.0;
  double T = 0.2;
  double beta = 0.0;
  long n = 100000;
  std::string out;
};

int cmd_diag_sampler(const Global& g, const std::string& kind, const DiagFlags& f) {
  auto file = open_out(g, f.out);
  std::ostream& os = out_or_stdout(file);
  const RngKey key = RngKey::root(g.seed, 0);
  if (kind == "triple") {
    os << "tau,z,b\n";
  } else {
    os << kind << '\n';
  }
  for (long i = 0; i < f.n; ++i) {
    RngStream rng(key, static_cast<u64>(i));
    if (kind == "hitting-time") {
      os << fmt(sample_hitting_time(rng, f.x, f.gamma, f.sigma)) << '\n';
    } else if (kind == "rbm0") {
      os << fmt(sample_rbm_marginal_from_zero(rng, f.s, f.gamma, f.sigma)) << '\n';
    } else if (kind == "meander") {
      os << fmt(sample_meander_at(rng, f.s, f.tau, f.x, f.sigma)) << '\n';
    } else if (kind == "random-time") {
      os << fmt(sample_random_time(rng, f.t, f.T, f.beta)) << '\n';
    } else {
      const CoordinateTriple c = sample_coordinate_triple(rng, f.t, f.s, f.x, f.gamma, f.sigma);
      os << fmt(c.tau) << ',' << fmt(c.z_at_s) << ',' << fmt(c.b_at_tau_min_s) << '\n';
    }
  }
  return 0;
}

int cmd_diag_path(const Global& g, const ProblemFlags& pf, const EstimatorFlags& ef, long n_paths,
                  const std::string& out) {
  const OpenChainSpec oc = pf.chain();
  EstimatorFlags e = ef;
  e.backend = "euler";
  const ReferenceProcess ref = e.make_reference(oc);
  const int d = pf.d;
  const int steps = ef.steps;
  const double dt = (oc.horizon - pf.t) / steps;
  auto file = open_out(g, out);
  std::ostream& os = out_or_stdout(file);
  os << "path,time";
  for (int i = 1; i <= d; ++i) os << ",z" << i;
  os << ",deriv_norm";
  for (int i = 1; i <= d; ++i) os << ",y" << i;
  os << '\n';
  const RngKey key = RngKey::root(g.seed, 0);
  for (long p = 0; p < n_paths; ++p) {
    RngStream rng(key, static_cast<u64>(p));
    Vec z = pf.state();
    Vec y = Vec::Zero(d);
    DerivativeState D = DerivativeState::identity(d);
    auto row = [&](int k) {
      os << p << ',' << fmt(pf.t + k * dt);
      for (int i = 0; i < d; ++i) os << ',' << fmt(z(i));
      os << ',' << fmt(D.matrix.lpNorm<Eigen::Infinity>());
      for (int i = 0; i < d; ++i) os << ',' << fmt(y(i));
      os << '\n';
    };
    row(0);
    for (int k = 1; k <= steps; ++k) {
      Vec dW(d);
      for (int i = 0; i < d; ++i) dW(i) = std::sqrt(dt) * rng.normal();
      const EulerStep st = euler_reference_step(z, D, ref.drift(z), ref.jacobian(z), oc.problem.sigma, dW, dt);
      z = st.state;
      D = st.deriv;
      y += st.dY;
      row(k);
    }
  }
  return 0;
}

int cmd_picard(const Global& g, const ProblemFlags& pf, int iters, std::uint64_t budget) {
  const OpenChainSpec oc = pf.chain();
  const ReferenceProcess ref = independent_rbm_reference(oc.problem);
  const PicardResult r = picard_reference_iteration(oc.problem, ref, pf.t, pf.state(), iters, budget, g.seed,
                                                    default_picard_grid(oc.horizon), g.workers);
  std::cout << "k,value,grad1,grad2,diff_norm,value_diff_norm,ratio\n";
  for (std::size_t i = 0; i < r.iterates.size(); ++i) {
    const auto& it = r.iterates[i];
    std::cout << it.k << ',' << fmt(it.value);
    for (Eigen::Index j = 0; j < it.gradient.size(); ++j) std::cout << ',' << fmt(it.gradient(j));
    std::cout << ',' << fmt(it.diff_norm) << ',' << fmt(it.value_diff_norm) << ',' << fmt(r.ratios[i]) << '\n';
  }
  return 0;
}

int cmd_validate(const Global& g, bool quick) {
  ValidationOptions o;
  o.seed = g.seed;
  o.quick = quick;
  if (g.workers > 0) o.max_workers = g.workers;
  bool all = true;
  for (const auto& c : run_validation(o)) {
    std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << "  " << c.detail << '\n';
    all = all && c.passed;
  }
  return all ? 0 : static_cast<int>(exit_code::numerical);
}

int cmd_run(const Global& g, const std::string& plan_path, bool seed_given) {
  ExperimentPlan plan = load_plan(plan_path);
  if (seed_given) plan.seed = g.seed;
  const auto rows = run_plan(plan, {g.workers}, [](const PlanRow& r) {
    std::cerr << "done state";
    for (Eigen::Index i = 0; i < r.state.size(); ++i) std::cerr << ' ' << fmt(r.state(i));
    std::cerr << " C_A " << fmt(r.action_bound) << " level " << r.level << " M " << r.branch_base << " value "
              << fmt(r.estimate.value) << " +- " << pct(r.estimate.value_summary.percent) << '\n';
  });
  if (plan.outputs.csv.empty() && plan.outputs.json.empty() && plan.outputs.timings_csv.empty()) {
    write_results_csv(std::cout, plan, rows);
  } else {
    write_plan_outputs(g.out_dir, plan, rows);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multilevel Picard solver for drift control problems with reflections"};
  app.set_help_flag("--help", "print this help and exit");
  app.require_subcommand(1);
  app.fallthrough();
  Global g;
  auto* seed_opt = app.add_option("--seed", g.seed, "root seed");
  app.add_option("--workers", g.workers, "worker threads (0: all cores)")->check(CLI::NonNegativeNumber);
  app.add_option("--out-dir", g.out_dir, "directory for output files");

  ProblemFlags pf;
  EstimatorFlags ef;

  auto* solve = app.add_subcommand("solve", "estimate value and gradient at one (t, x)");
  pf.add(solve);
  ef.add(solve);

  auto* baseline = app.add_subcommand("baseline", "least-control cost by Monte Carlo");
  ProblemFlags bf;
  double dt = 1e-4;
  long paths = 10000;
  std::string min_rule = "bridge";
  bf.add(baseline);
  baseline->add_option("--dt", dt, "time step")->check(CLI::PositiveNumber);
  baseline->add_option("--paths", paths, "sample paths")->check(CLI::Range(2L, 1000000000L));
  baseline->add_option("--rule", min_rule, "running-minimum rule")->check(CLI::IsMember({"grid", "bridge"}));

  auto* grid = app.add_subcommand("policy-grid", "policy labels on a d = 2 state grid");
  ProblemFlags gf;
  gf.h = {1.0, 2.0};
  EstimatorFlags gef;
  gef.level = 4;
  gef.M = 60;
  gef.replicates = 1;
  int n_grid = 11;
  double step = 0.1;
  std::string grid_out, value_diff_out;
  long grid_paths = 10000;
  double grid_dt = 1e-4;
  gf.add(grid, false);
  gef.add(grid);
  grid->add_option("--grid", n_grid, "points per axis")->check(CLI::PositiveNumber);
  grid->add_option("--step", step, "grid spacing")->check(CLI::PositiveNumber);
  grid->add_option("--out", grid_out, "policy CSV (default stdout)");
  grid->add_option("--value-diff", value_diff_out, "also write MLP value minus least-control baseline per state");
  grid->add_option("--paths", grid_paths, "baseline paths per state")->check(CLI::Range(2L, 1000000000L));
  grid->add_option("--dt", grid_dt, "baseline time step")->check(CLI::PositiveNumber);

  auto* diag = app.add_subcommand("diag-sampler", "dump draws of one sampler as CSV");
  std::string kind;
  DiagFlags df;
  diag->add_option("kind", kind, "hitting-time | rbm0 | meander | random-time | triple")
      ->required()
      ->check(CLI::IsMember({"hitting-time", "rbm0", "meander", "random-time", "triple"}));
  diag->add_option("--x", df.x, "start point");
  diag->add_option("--gamma", df.gamma, "drift");
  diag->add_option("--sigma", df.sigma, "volatility");
  diag->add_option("--t", df.t, "start time");
  diag->add_option("--s", df.s, "evaluation time (rbm0: duration)");
  diag->add_option("--tau", df.tau, "meander hitting time");
  diag->add_option("--T", df.T, "horizon");
  diag->add_option("--beta", df.beta, "discount rate");
  diag->add_option("--n", df.n, "number of draws")->check(CLI::PositiveNumber);
  diag->add_option("--out", df.out, "output CSV (default stdout)");

  auto* dpath = app.add_subcommand("diag-path", "dump Euler reference paths with derivative norms and regulators");
  ProblemFlags pp;
  EstimatorFlags pe;
  long n_paths = 1;
  std::string path_out;
  pp.add(dpath);
  pe.add(dpath);
  dpath->add_option("--paths", n_paths, "number of paths")->check(CLI::PositiveNumber);
  dpath->add_option("--out", path_out, "output CSV (default stdout)");

  auto* picard = app.add_subcommand("picard-diag", "Picard iteration contraction diagnostic (d <= 2)");
  ProblemFlags qf;
  int iters = 6;
  std::uint64_t budget = 4000;
  qf.add(picard);
  picard->add_option("--iters", iters, "Picard iterations")->check(CLI::PositiveNumber);
  picard->add_option("--budget", budget, "Monte Carlo samples per grid node")->check(CLI::PositiveNumber);

  auto* validate = app.add_subcommand("validate", "run the invariant suite");
  bool quick = false;
  validate->add_flag("--quick", quick, "smaller sample sizes");

  auto* run = app.add_subcommand("run", "run an experiment plan");
  std::string plan_path;
  run->add_option("--plan", plan_path, "plan file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(exit_code::usage);
  }

  try {
    if (*solve) return cmd_solve(g, pf, ef);
    if (*baseline) return cmd_baseline(g, bf, dt, paths, min_rule);
    if (*grid) return cmd_policy_grid(g, gf, gef, n_grid, step, grid_out, value_diff_out, grid_paths, grid_dt);
    if (*diag) return cmd_diag_sampler(g, kind, df);
    if (*dpath) return cmd_diag_path(g, pp, pe, n_paths, path_out);
    if (*picard) return cmd_picard(g, qf, iters, budget);
    if (*validate) return cmd_validate(g, quick);
    if (*run) return cmd_run(g, plan_path, seed_opt->count() > 0);
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return static_cast<int>(exit_code::config);
  } catch (const rmlp::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << '\n';
    return static_cast<int>(exit_code::config);
  } catch (const numerical_failure& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return static_cast<int>(exit_code::numerical);
  } catch (const unsupported_configuration& e) {
    std::cerr << "unsupported: " << e.what() << '\n';
    return static_cast<int>(exit_code::unsupported);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(exit_code::numerical);
  }
  return static_cast<int>(exit_code::usage);
}
