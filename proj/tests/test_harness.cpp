#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "rmlp/errors.hpp"
#include "rmlp/harness.hpp"

using namespace rmlp;

namespace {

const char* kPlan = R"({
  "problem": {"dim": 2, "holding_cost": [1, 2], "horizon": 0.2},
  "t": 0.0,
  "states": [[0.4, 0.4], [0.0, 1.0]],
  "levels": [[1, 16], [2, 4]],
  "C_A": [1, 2],
  "replicates": 3,
  "seed": 77,
  "backend": "exact",
  "outputs": {"csv": "r.csv", "json": "r.json", "timings_csv": "t.csv"}
})";

std::string message_of(const std::string& text) {
  try {
    parse_plan(text, "plan.json");
  } catch (const config_error& e) {
    return e.what();
  }
  return "";
}

std::string csv_of(const ExperimentPlan& plan, const std::vector<PlanRow>& rows) {
  std::ostringstream os;
  write_results_csv(os, plan, rows);
  return os.str();
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  for (std::string l; std::getline(is, l);) out.push_back(l);
  return out;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_SUITE("harness") {
  TEST_CASE("parse a valid plan") {
    const auto p = parse_plan(kPlan);
    CHECK(p.dim == 2);
    CHECK(p.holding_cost(1) == 2.0);
    CHECK(p.states.size() == 2);
    CHECK(p.states[1](1) == 1.0);
    REQUIRE(p.levels.size() == 2);
    CHECK(p.levels[1] == std::pair<int, std::uint64_t>{2, 4});
    CHECK(p.action_bounds == std::vector<double>{1, 2});
    CHECK(p.replicates == 3);
    CHECK(p.seed == 77);
    CHECK(p.backend.kind == BackendKind::exact);
    CHECK(p.variance_reduced);
    CHECK(p.outputs.timings_csv == "t.csv");
  }

  TEST_CASE("backend forms") {
    auto with = [](const std::string& backend) {
      std::string text = kPlan;
      const auto at = text.find("\"exact\"");
      text.replace(at, 7, backend);
      return parse_plan(text);
    };
    CHECK(with("\"euler\"").backend.steps == 50);
    CHECK(with("{\"euler\": 20}").backend.steps == 20);
    const auto b = with(R"({"euler": {"steps": 30, "rule": "bridge"}})").backend;
    CHECK(b.kind == BackendKind::euler);
    CHECK(b.steps == 30);
    CHECK(b.rule == ReflectionRule::bridge);
    CHECK_THROWS_AS(with("\"milstein\""), config_error);
    CHECK_THROWS_AS(with(R"({"euler": {"rule": "reflect"}})"), config_error);
  }

  TEST_CASE("config echo round trip") {
    const auto p = parse_plan(kPlan);
    const auto j = plan_to_json(p);
    const auto q = parse_plan(j.dump(2));
    CHECK(plan_to_json(q) == j);
    CHECK(q.states == p.states);
    CHECK(q.levels == p.levels);

    const auto e = parse_plan(plan_to_json(parse_plan(std::string(kPlan).replace(std::string(kPlan).find("\"exact\""), 7,
                                                                                  "{\"euler\": 12}")))
                                  .dump());
    CHECK(e.backend.kind == BackendKind::euler);
    CHECK(e.backend.steps == 12);
  }

  TEST_CASE("syntax errors point at the line") {
    const std::string bad = "{\n  \"problem\": {\"dim\": 2},\n  \"levels\": [[1, 2]],,\n  \"C_A\": [1]\n}";
    const auto msg = message_of(bad);
    CHECK(msg.rfind("plan.json:3:", 0) == 0);
  }

  TEST_CASE("semantic errors point at the key") {
    const std::string a = "{\n  \"problem\": {\"dim\": 2},\n  \"states\": [],\n  \"levels\": [[0, 4]],\n  \"C_A\": [1]\n}";
    const auto ma = message_of(a);
    CHECK(ma.rfind("plan.json:4:", 0) == 0);
    CHECK(ma.find("'levels'") != std::string::npos);

    const std::string b = "{\n  \"problem\": {\"dim\": 2},\n  \"levels\": [[1, 4]],\n  \"C_A\": [1],\n  \"sede\": 3\n}";
    const auto mb = message_of(b);
    CHECK(mb.rfind("plan.json:5:", 0) == 0);
    CHECK(mb.find("unknown key") != std::string::npos);

    const std::string c = "{\n  \"problem\": {\"dim\": 2,\n    \"holding_cost\": [1, -1]},\n  \"levels\": [[1, 4]],\n  \"C_A\": [1]\n}";
    CHECK(message_of(c).rfind("plan.json:3:", 0) == 0);

    const std::string d = "{\n  \"problem\": {\"dim\": 2},\n  \"states\": [[0.4, -0.1]],\n  \"levels\": [[1, 4]],\n  \"C_A\": [1]\n}";
    CHECK(message_of(d).rfind("plan.json:3:", 0) == 0);

    CHECK_FALSE(message_of("{\"levels\": [[1, 1]], \"C_A\": [1]}").empty());
    CHECK_THROWS_AS(load_plan("/nonexistent/plan.json"), config_error);
  }

  TEST_CASE("empty state list gives a header-only table") {
    const std::string text = "{\"problem\": {\"dim\": 3}, \"states\": [], \"levels\": [[2, 3]], \"C_A\": [1]}";
    const auto p = parse_plan(text);
    const auto rows = run_plan(p);
    CHECK(rows.empty());
    const auto out = lines(csv_of(p, rows));
    REQUIRE(out.size() == 1);
    CHECK(out[0] ==
          "t,x1,x2,x3,C_A,level,M,replicates,value_mean,value_std,value_std_pct,grad1_mean,grad2_mean,grad3_mean,"
          "grad1_std_pct,grad2_std_pct,grad3_std_pct,sampler_calls");
    CHECK(results_sidecar(p, rows)["rows"].empty());
  }

  TEST_CASE("plan outputs: rows, determinism and rerun from the echo") {
    const auto p = parse_plan(kPlan);
    const auto rows = run_plan(p, RunOptions{1});
    REQUIRE(rows.size() == 8);  // 2 states x 2 C_A x 2 levels
    CHECK(rows[0].state == p.states[0]);
    CHECK(rows[0].action_bound == 1.0);
    CHECK(rows[1].level == 2);
    CHECK(rows[2].action_bound == 2.0);

    const std::string first = csv_of(p, rows);
    const auto again = run_plan(p, RunOptions{2});
    CHECK(csv_of(p, again) == first);

    const auto sidecar = results_sidecar(p, rows);
    const auto echoed = parse_plan(sidecar["plan"].dump());
    CHECK(csv_of(echoed, run_plan(echoed)) == first);

    REQUIRE(sidecar["rows"].size() == 8);
    const auto& r0 = sidecar["rows"][0];
    CHECK(r0["replicates"].size() == 3);
    CHECK(r0["value"]["mean"].get<double>() == rows[0].estimate.value);
    CHECK(r0["sampler_calls"].get<std::uint64_t>() == 3 * 16);

    const auto out = lines(first);
    REQUIRE(out.size() == 9);
    CHECK(out[1].rfind("0,0.4,0.4,1,1,16,3,", 0) == 0);
    CHECK(out[1].substr(out[1].rfind(',') + 1) == "48");

    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "rmlp_harness_test";
    fs::remove_all(dir);
    write_plan_outputs(dir.string(), p, rows);
    CHECK(slurp(dir / "r.csv") == first);
    const auto timings = lines(slurp(dir / "t.csv"));
    CHECK(timings.size() == 1 + 8 * 3);
    CHECK(timings[0] == "t,x1,x2,C_A,level,M,replicate,seconds,sampler_calls");
    CHECK(nlohmann::json::parse(slurp(dir / "r.json"))["rows"].size() == 8);
    fs::remove_all(dir);
  }

  TEST_CASE("per-level table shape: five levels by three action bounds") {
    const std::string text = R"({"problem": {"dim": 2, "holding_cost": [1, 1]}, "states": [[0.4, 0.4]],
      "levels": [[1, 8], [2, 4], [3, 3], [4, 2], [5, 2]], "C_A": [1, 2, 5], "replicates": 2})";
    const auto p = parse_plan(text);
    const auto rows = run_plan(p);
    CHECK(rows.size() == 15);
    CHECK(lines(csv_of(p, rows)).size() == 16);
    for (const auto& r : rows) {
      CHECK(r.estimate.per_replicate.size() == 2);
      CHECK(r.estimate.sampler_calls() == 2 * expected_sampler_calls(r.level, r.branch_base));
    }
  }
}
