#include "rmlp/harness.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>

#include "rmlp/errors.hpp"

namespace rmlp {

using nlohmann::json;

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

namespace {

struct Anchor {
  std::size_t line = 1;
  std::size_t col = 1;
};

Anchor anchor_at(const std::string& text, std::size_t byte) {
  Anchor a;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++a.line;
      a.col = 1;
    } else {
      ++a.col;
    }
  }
  return a;
}

// Best-effort position of a key path: each quoted key searched after the previous one.
Anchor anchor_of(const std::string& text, const std::vector<std::string>& path) {
  std::size_t pos = 0;
  for (const auto& key : path) {
    const auto hit = text.find("\"" + key + "\"", pos);
    if (hit == std::string::npos) break;
    pos = hit;
  }
  return anchor_at(text, pos);
}

class PlanReader {
 public:
  PlanReader(const std::string& text, std::string source) : text_(text), source_(std::move(source)) {}

  [[noreturn]] void fail(const std::vector<std::string>& path, const std::string& what) const {
    const Anchor a = anchor_of(text_, path);
    std::string name;
    for (const auto& p : path) name += (name.empty() ? "" : ".") + p;
    throw config_error(source_ + ":" + std::to_string(a.line) + ":" + std::to_string(a.col) + ": " +
                       (name.empty() ? "" : "'" + name + "': ") + what);
  }

  void only_keys(const json& obj, const std::vector<std::string>& path, const std::set<std::string>& allowed) const {
    if (!obj.is_object()) fail(path, "expected an object");
    for (auto it = obj.begin(); it != obj.end(); ++it)
      if (!allowed.count(it.key())) {
        auto p = path;
        p.push_back(it.key());
        fail(p, "unknown key");
      }
  }

  double number(const json& v, const std::vector<std::string>& path) const {
    if (!v.is_number()) fail(path, "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) fail(path, "expected a finite number");
    return x;
  }

  std::uint64_t count(const json& v, const std::vector<std::string>& path, std::uint64_t min) const {
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0))
      fail(path, "expected a nonnegative integer");
    const auto n = v.get<std::uint64_t>();
    if (n < min) fail(path, "must be >= " + std::to_string(min));
    return n;
  }

  Vec vector(const json& v, const std::vector<std::string>& path, int dim) const {
    if (!v.is_array()) fail(path, "expected an array of numbers");
    if (dim >= 0 && static_cast<int>(v.size()) != dim)
      fail(path, "expected " + std::to_string(dim) + " entries, got " + std::to_string(v.size()));
    Vec out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = number(v[i], path);
    return out;
  }

 private:
  const std::string& text_;
  std::string source_;
};

}  // namespace

ExperimentPlan parse_plan(const std::string& text, const std::string& source) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    const Anchor a = anchor_at(text, e.byte == 0 ? 0 : e.byte - 1);
    throw config_error(source + ":" + std::to_string(a.line) + ":" + std::to_string(a.col) + ": " + e.what());
  }
  const PlanReader r(text, source);
  r.only_keys(j, {}, {"problem", "t", "states", "levels", "C_A", "replicates", "seed", "backend",
                      "variance_reduced", "outputs"});

  ExperimentPlan plan;
  if (!j.contains("problem")) r.fail({}, "missing 'problem'");
  const json& pb = j["problem"];
  r.only_keys(pb, {"problem"}, {"dim", "holding_cost", "horizon", "discount"});
  if (!pb.contains("dim")) r.fail({"problem"}, "missing 'dim'");
  plan.dim = static_cast<int>(r.count(pb["dim"], {"problem", "dim"}, 2));
  plan.holding_cost = pb.contains("holding_cost") ? r.vector(pb["holding_cost"], {"problem", "holding_cost"}, plan.dim)
                                                  : Vec::Ones(plan.dim);
  if ((plan.holding_cost.array() < 0.0).any()) r.fail({"problem", "holding_cost"}, "entries must be >= 0");
  if (pb.contains("horizon")) plan.horizon = r.number(pb["horizon"], {"problem", "horizon"});
  if (!(plan.horizon > 0.0)) r.fail({"problem", "horizon"}, "must be > 0");
  if (pb.contains("discount")) plan.discount = r.number(pb["discount"], {"problem", "discount"});
  if (plan.discount < 0.0) r.fail({"problem", "discount"}, "must be >= 0");

  if (j.contains("t")) plan.t = r.number(j["t"], {"t"});
  if (!(plan.t >= 0.0 && plan.t < plan.horizon)) r.fail({"t"}, "must satisfy 0 <= t < horizon");

  if (j.contains("states")) {
    if (!j["states"].is_array()) r.fail({"states"}, "expected an array of states");
    for (const auto& s : j["states"]) {
      Vec x = r.vector(s, {"states"}, plan.dim);
      if ((x.array() < 0.0).any()) r.fail({"states"}, "states must lie in the nonnegative orthant");
      plan.states.push_back(std::move(x));
    }
  }

  if (!j.contains("levels") || !j["levels"].is_array()) r.fail({"levels"}, "expected an array of [n, M] pairs");
  for (const auto& l : j["levels"]) {
    if (!l.is_array() || l.size() != 2) r.fail({"levels"}, "each entry must be [n, M]");
    plan.levels.emplace_back(static_cast<int>(r.count(l[0], {"levels"}, 1)), r.count(l[1], {"levels"}, 1));
  }

  if (!j.contains("C_A")) r.fail({}, "missing 'C_A'");
  if (j["C_A"].is_array()) {
    for (const auto& c : j["C_A"]) plan.action_bounds.push_back(r.number(c, {"C_A"}));
  } else {
    plan.action_bounds.push_back(r.number(j["C_A"], {"C_A"}));
  }
  for (double c : plan.action_bounds)
    if (c < 0.0) r.fail({"C_A"}, "entries must be >= 0");

  if (j.contains("replicates")) plan.replicates = static_cast<int>(r.count(j["replicates"], {"replicates"}, 1));
  if (j.contains("seed")) plan.seed = r.count(j["seed"], {"seed"}, 0);

  if (j.contains("backend")) {
    const json& b = j["backend"];
    if (b.is_string()) {
      const auto name = b.get<std::string>();
      if (name == "exact") {
        plan.backend = Backend::exact();
      } else if (name == "euler") {
        plan.backend = Backend::euler();
      } else {
        r.fail({"backend"}, "expected \"exact\", \"euler\" or {\"euler\": steps}");
      }
    } else if (b.is_object() && b.contains("euler") && b.size() == 1) {
      const json& e = b["euler"];
      if (e.is_object()) {
        r.only_keys(e, {"backend", "euler"}, {"steps", "rule"});
        plan.backend = Backend::euler();
        if (e.contains("steps"))
          plan.backend.steps = static_cast<int>(r.count(e["steps"], {"backend", "euler", "steps"}, 1));
        if (e.contains("rule")) {
          const auto rule = e["rule"].is_string() ? e["rule"].get<std::string>() : "";
          if (rule == "projection") {
            plan.backend.rule = ReflectionRule::projection;
          } else if (rule == "bridge") {
            plan.backend.rule = ReflectionRule::bridge;
          } else {
            r.fail({"backend", "euler", "rule"}, "expected \"projection\" or \"bridge\"");
          }
        }
      } else {
        plan.backend = Backend::euler(static_cast<int>(r.count(e, {"backend", "euler"}, 1)));
      }
    } else {
      r.fail({"backend"}, "expected \"exact\", \"euler\" or {\"euler\": steps}");
    }
  }

  if (j.contains("variance_reduced")) {
    if (!j["variance_reduced"].is_boolean()) r.fail({"variance_reduced"}, "expected true or false");
    plan.variance_reduced = j["variance_reduced"].get<bool>();
  }

  if (j.contains("outputs")) {
    const json& o = j["outputs"];
    r.only_keys(o, {"outputs"}, {"csv", "json", "timings_csv"});
    auto str = [&](const char* key, std::string& dst) {
      if (!o.contains(key)) return;
      if (!o[key].is_string()) r.fail({"outputs", key}, "expected a path string");
      dst = o[key].get<std::string>();
    };
    str("csv", plan.outputs.csv);
    str("json", plan.outputs.json);
    str("timings_csv", plan.outputs.timings_csv);
  }
  return plan;
}

ExperimentPlan load_plan(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error(path + ": cannot open plan file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_plan(ss.str(), path);
}

json plan_to_json(const ExperimentPlan& plan) {
  json j;
  j["problem"] = {{"dim", plan.dim},
                  {"holding_cost", std::vector<double>(plan.holding_cost.data(),
                                                       plan.holding_cost.data() + plan.holding_cost.size())},
                  {"horizon", plan.horizon},
                  {"discount", plan.discount}};
  j["t"] = plan.t;
  j["states"] = json::array();
  for (const auto& s : plan.states) j["states"].push_back(std::vector<double>(s.data(), s.data() + s.size()));
  j["levels"] = json::array();
  for (const auto& [n, M] : plan.levels) j["levels"].push_back({n, M});
  j["C_A"] = plan.action_bounds;
  j["replicates"] = plan.replicates;
  j["seed"] = plan.seed;
  if (plan.backend.kind == BackendKind::exact) {
    j["backend"] = "exact";
  } else {
    j["backend"] = {{"euler",
                     {{"steps", plan.backend.steps},
                      {"rule", plan.backend.rule == ReflectionRule::bridge ? "bridge" : "projection"}}}};
  }
  j["variance_reduced"] = plan.variance_reduced;
  j["outputs"] = json::object();
  if (!plan.outputs.csv.empty()) j["outputs"]["csv"] = plan.outputs.csv;
  if (!plan.outputs.json.empty()) j["outputs"]["json"] = plan.outputs.json;
  if (!plan.outputs.timings_csv.empty()) j["outputs"]["timings_csv"] = plan.outputs.timings_csv;
  return j;
}

OpenChainSpec plan_problem(const ExperimentPlan& plan, double ca) {
  OpenChainSpec oc = build_open_chain(plan.dim, ca, plan.holding_cost, plan.horizon);
  oc.problem.discount = plan.discount;
  return oc;
}

std::vector<PlanRow> run_plan(const ExperimentPlan& plan, const RunOptions& options, const PlanProgress& progress) {
  std::vector<PlanRow> rows;
  for (const auto& x : plan.states) {
    for (double ca : plan.action_bounds) {
      const OpenChainSpec oc = plan_problem(plan, ca);
      ReferenceProcess ref = plan.backend.kind == BackendKind::exact
                                 ? independent_rbm_reference(oc.problem)
                                 : constant_drift_reference(oc.problem, plan.backend.steps);
      ref.backend = plan.backend;
      for (const auto& [n, M] : plan.levels) {
        MlpConfig cfg;
        cfg.level = n;
        cfg.branch_base = M;
        cfg.replicates = plan.replicates;
        cfg.backend = plan.backend;
        PlanRow row;
        row.state = x;
        row.action_bound = ca;
        row.level = n;
        row.branch_base = M;
        row.estimate = plan.variance_reduced
                           ? mlp_estimate_variance_reduced(oc.problem, ref, cfg, plan.t, x, plan.seed, options)
                           : mlp_estimate(oc.problem, ref, cfg, plan.t, x, plan.seed, options);
        if (progress) progress(row);
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

namespace {

std::string opt(const std::optional<double>& v) { return v ? fmt(*v) : ""; }

void key_columns(std::ostream& os, int d) {
  os << "t";
  for (int i = 1; i <= d; ++i) os << ",x" << i;
  os << ",C_A,level,M";
}

void key_values(std::ostream& os, const ExperimentPlan& plan, const PlanRow& r) {
  os << fmt(plan.t);
  for (Eigen::Index i = 0; i < r.state.size(); ++i) os << ',' << fmt(r.state(i));
  os << ',' << fmt(r.action_bound) << ',' << r.level << ',' << r.branch_base;
}

}  // namespace

void write_results_csv(std::ostream& os, const ExperimentPlan& plan, const std::vector<PlanRow>& rows) {
  const int d = plan.dim;
  key_columns(os, d);
  os << ",replicates,value_mean,value_std,value_std_pct";
  for (int i = 1; i <= d; ++i) os << ",grad" << i << "_mean";
  for (int i = 1; i <= d; ++i) os << ",grad" << i << "_std_pct";
  os << ",sampler_calls\n";
  for (const auto& r : rows) {
    const auto& e = r.estimate;
    key_values(os, plan, r);
    os << ',' << e.per_replicate.size() << ',' << fmt(e.value_summary.mean) << ',' << opt(e.value_summary.std) << ','
       << opt(e.value_summary.percent);
    for (int i = 0; i < d; ++i) os << ',' << fmt(e.gradient(i));
    for (int i = 0; i < d; ++i) os << ',' << opt(e.gradient_summary[static_cast<std::size_t>(i)].percent);
    os << ',' << e.sampler_calls() << '\n';
  }
}

void write_timings_csv(std::ostream& os, const ExperimentPlan& plan, const std::vector<PlanRow>& rows) {
  key_columns(os, plan.dim);
  os << ",replicate,seconds,sampler_calls\n";
  for (const auto& r : rows) {
    for (std::size_t k = 0; k < r.estimate.per_replicate.size(); ++k) {
      key_values(os, plan, r);
      const auto& rep = r.estimate.per_replicate[k];
      os << ',' << k << ',' << fmt(rep.seconds) << ',' << rep.sampler_calls << '\n';
    }
  }
}

json results_sidecar(const ExperimentPlan& plan, const std::vector<PlanRow>& rows) {
  auto summary = [](const Summary& s) {
    json o = {{"mean", s.mean}};
    o["std"] = s.std ? json(*s.std) : json(nullptr);
    o["percent"] = s.percent ? json(*s.percent) : json(nullptr);
    return o;
  };
  auto vec = [](const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  json out;
  out["plan"] = plan_to_json(plan);
  out["rows"] = json::array();
  for (const auto& r : rows) {
    const auto& e = r.estimate;
    json row = {{"t", plan.t},
                {"state", vec(r.state)},
                {"C_A", r.action_bound},
                {"level", r.level},
                {"M", r.branch_base},
                {"value", summary(e.value_summary)},
                {"sampler_calls", e.sampler_calls()},
                {"seconds", e.seconds()}};
    row["gradient"] = json::array();
    for (const auto& g : e.gradient_summary) row["gradient"].push_back(summary(g));
    row["replicates"] = json::array();
    for (const auto& rep : e.per_replicate)
      row["replicates"].push_back({{"value", rep.value},
                                   {"gradient", vec(rep.gradient)},
                                   {"sampler_calls", rep.sampler_calls},
                                   {"seconds", rep.seconds}});
    out["rows"].push_back(std::move(row));
  }
  return out;
}

void write_plan_outputs(const std::string& out_dir, const ExperimentPlan& plan, const std::vector<PlanRow>& rows) {
  namespace fs = std::filesystem;
  const fs::path base = out_dir.empty() ? fs::path(".") : fs::path(out_dir);
  auto open = [&](const std::string& name) {
    const fs::path p = fs::path(name).is_absolute() ? fs::path(name) : base / name;
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream os(p);
    if (!os) throw config_error(p.string() + ": cannot open output file");
    return os;
  };
  if (!plan.outputs.csv.empty()) {
    auto os = open(plan.outputs.csv);
    write_results_csv(os, plan, rows);
  }
  if (!plan.outputs.timings_csv.empty()) {
    auto os = open(plan.outputs.timings_csv);
    write_timings_csv(os, plan, rows);
  }
  if (!plan.outputs.json.empty()) {
    auto os = open(plan.outputs.json);
    os << results_sidecar(plan, rows).dump(2) << '\n';
  }
}

}  // namespace rmlp
