#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "rmlp/mlp.hpp"
#include "rmlp/pss.hpp"

namespace rmlp {

struct PlanOutputs {
  std::string csv;
  std::string json;
  std::string timings_csv;
};

/// Experiment grid over states x C_A x (n, M) for one open-chain problem.
struct ExperimentPlan {
  int dim = 2;
  Vec holding_cost;
  double horizon = 0.2;
  double discount = 0.0;
  double t = 0.0;
  std::vector<Vec> states;
  std::vector<std::pair<int, std::uint64_t>> levels;
  std::vector<double> action_bounds;  // "C_A" in the file
  int replicates = 5;
  std::uint64_t seed = 1;
  Backend backend = Backend::exact();
  bool variance_reduced = true;
  PlanOutputs outputs;
};

/// Parses plan text. Errors are thrown as config_error with a
/// "<source>:<line>:<col>: ..." prefix.
ExperimentPlan parse_plan(const std::string& text, const std::string& source = "<plan>");
ExperimentPlan load_plan(const std::string& path);
nlohmann::json plan_to_json(const ExperimentPlan& plan);

/// Problem of one plan item.
OpenChainSpec plan_problem(const ExperimentPlan& plan, double ca);

struct PlanRow {
  Vec state;
  double action_bound = 0.0;
  int level = 0;
  std::uint64_t branch_base = 0;
  MlpEstimate estimate;
};

using PlanProgress = std::function<void(const PlanRow&)>;

/// Runs every (state, C_A, level) item in order.
std::vector<PlanRow> run_plan(const ExperimentPlan& plan, const RunOptions& options = {},
                              const PlanProgress& progress = {});

/// Deterministic results table: no wall-clock columns.
void write_results_csv(std::ostream& os, const ExperimentPlan& plan, const std::vector<PlanRow>& rows);
void write_timings_csv(std::ostream& os, const ExperimentPlan& plan, const std::vector<PlanRow>& rows);
nlohmann::json results_sidecar(const ExperimentPlan& plan, const std::vector<PlanRow>& rows);

/// Writes the three outputs under out_dir (relative output paths are resolved against it).
void write_plan_outputs(const std::string& out_dir, const ExperimentPlan& plan, const std::vector<PlanRow>& rows);

/// Formats a double the way every CSV in this project does.
std::string fmt(double v);

}  // namespace rmlp
