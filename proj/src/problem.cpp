#include "rmlp/problem.hpp"

#include <cmath>
#include <string>

#include "rmlp/errors.hpp"

namespace rmlp {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw invalid_argument(what);
}

bool all_finite(const Mat& m) { return m.allFinite(); }

Mat matrix_from_json(const nlohmann::json& j, const char* name) {
  if (!j.is_array()) throw config_error(std::string(name) + ": expected an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  Eigen::Index cols = rows == 0 ? 0 : static_cast<Eigen::Index>(j.at(0).size());
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j.at(r);
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw config_error(std::string(name) + ": ragged or malformed row " + std::to_string(r));
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row.at(c).get<double>();
  }
  return m;
}

Vec vector_from_json(const nlohmann::json& j, const char* name) {
  if (!j.is_array()) throw config_error(std::string(name) + ": expected an array");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = j.at(i).get<double>();
  return v;
}

nlohmann::json to_json_matrix(const Mat& m) {
  auto out = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    auto row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(row);
  }
  return out;
}

nlohmann::json to_json_vector(const Vec& v) {
  auto out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

}  // namespace

double TerminalCost::operator()(const double* x, int d) const {
  if (linear.size() == 0) return 0.0;
  double s = 0.0;
  for (int i = 0; i < d; ++i) s += linear(i) * x[i];
  return s;
}

void ProblemSpec::validate() const {
  require(dim >= 1, "dim must be positive");
  require(control_dim >= 1, "control_dim must be positive");
  require(std::isfinite(horizon) && horizon > 0.0, "horizon must be positive");
  require(std::isfinite(discount) && discount >= 0.0, "discount must be nonnegative");
  require(std::isfinite(action_bound) && action_bound >= 0.0, "action_bound must be nonnegative");
  require(sigma.rows() == dim && sigma.cols() == dim && all_finite(sigma), "sigma must be a finite dim x dim matrix");
  require(reflection.rows() == dim && reflection.cols() == dim && all_finite(reflection),
          "reflection must be a finite dim x dim matrix");
  require(drift_base.size() == dim && all_finite(drift_base), "drift_base must have dim entries");
  require(control_matrix.rows() == dim && control_matrix.cols() == control_dim && all_finite(control_matrix),
          "control_matrix must be dim x control_dim");
  require(holding_cost.size() == dim && all_finite(holding_cost) && (holding_cost.array() >= 0.0).all(),
          "holding_cost must be a nonnegative dim-vector");
  require(pushing_penalty.size() == dim && all_finite(pushing_penalty) && (pushing_penalty.array() >= 0.0).all(),
          "pushing_penalty must be a nonnegative dim-vector");
  if (terminal_cost.linear.size() != 0)
    require(terminal_cost.linear.size() == dim && all_finite(terminal_cost.linear) &&
                (terminal_cost.linear.array() >= 0.0).all(),
            "terminal_cost coefficients must be a nonnegative dim-vector");

  const Mat q = reflection_q();
  for (int i = 0; i < dim; ++i) {
    require(q(i, i) == 0.0, "reflection: Q must have zero diagonal");
    double row = 0.0;
    for (int j = 0; j < dim; ++j) {
      require(q(i, j) >= 0.0, "reflection: Q must be nonnegative");
      row += q(i, j);
    }
    require(row <= 1.0 + 1e-12, "reflection: rows of Q must sum to at most 1");
  }
  if (sigma_is_diagonal())
    for (int i = 0; i < dim; ++i) require(sigma(i, i) > 0.0, "sigma: diagonal entries must be positive");
}

bool ProblemSpec::sigma_is_diagonal() const {
  for (int i = 0; i < sigma.rows(); ++i)
    for (int j = 0; j < sigma.cols(); ++j)
      if (i != j && sigma(i, j) != 0.0) return false;
  return true;
}

bool ProblemSpec::normal_reflection() const {
  return reflection.rows() == dim && reflection.isIdentity(0.0);
}

ProblemSpec problem_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw config_error("problem: expected an object");
  ProblemSpec p;
  try {
    p.dim = j.at("dim").get<int>();
    p.horizon = j.at("horizon").get<double>();
    p.discount = j.value("discount", 0.0);
    p.sigma = matrix_from_json(j.at("sigma"), "sigma");
    p.reflection = j.contains("reflection") ? matrix_from_json(j.at("reflection"), "reflection")
                                            : Mat::Identity(p.dim, p.dim);
    p.drift_base = vector_from_json(j.at("drift_base"), "drift_base");
    p.control_matrix = matrix_from_json(j.at("control_matrix"), "control_matrix");
    p.control_dim = j.value("control_dim", static_cast<int>(p.control_matrix.cols()));
    p.action_bound = j.at("action_bound").get<double>();
    p.holding_cost = vector_from_json(j.at("holding_cost"), "holding_cost");
    p.pushing_penalty = j.contains("pushing_penalty") ? vector_from_json(j.at("pushing_penalty"), "pushing_penalty")
                                                      : Vec::Zero(p.dim);
    if (j.contains("terminal_cost")) {
      const auto& tc = j.at("terminal_cost");
      if (tc.is_string() && tc.get<std::string>() == "zero") {
        p.terminal_cost = TerminalCost::zero();
      } else if (tc.is_object() && tc.contains("linear")) {
        p.terminal_cost = TerminalCost::linear_in(vector_from_json(tc.at("linear"), "terminal_cost.linear"));
      } else {
        throw config_error("terminal_cost: expected \"zero\" or {\"linear\": [...]}");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("problem: ") + e.what());
  }
  try {
    p.validate();
  } catch (const invalid_argument& e) {
    throw config_error(std::string("problem: ") + e.what());
  }
  return p;
}

nlohmann::json problem_to_json(const ProblemSpec& spec) {
  nlohmann::json j;
  j["dim"] = spec.dim;
  j["control_dim"] = spec.control_dim;
  j["horizon"] = spec.horizon;
  j["discount"] = spec.discount;
  j["sigma"] = to_json_matrix(spec.sigma);
  j["reflection"] = to_json_matrix(spec.reflection);
  j["drift_base"] = to_json_vector(spec.drift_base);
  j["control_matrix"] = to_json_matrix(spec.control_matrix);
  j["action_bound"] = spec.action_bound;
  j["holding_cost"] = to_json_vector(spec.holding_cost);
  j["pushing_penalty"] = to_json_vector(spec.pushing_penalty);
  if (spec.terminal_cost.linear.size() == 0)
    j["terminal_cost"] = "zero";
  else
    j["terminal_cost"] = {{"linear", to_json_vector(spec.terminal_cost.linear)}};
  return j;
}

ControlOperator::ControlOperator(const ProblemSpec& spec) : ca_(spec.action_bound) {
  const Mat& g = spec.control_matrix;
  for (Eigen::Index k = 0; k < g.cols(); ++k) {
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      if (g(i, k) != 0.0) {
        row_.push_back(static_cast<int>(i));
        val_.push_back(g(i, k));
      }
    }
    start_.push_back(static_cast<int>(row_.size()));
  }
}

double hamiltonian_bar(const ProblemSpec& spec, const Vec& p) {
  if (p.size() != spec.dim || !p.allFinite()) throw invalid_argument("hamiltonian_bar: p must be a finite dim-vector");
  const Vec gtp = spec.control_matrix.transpose() * p;
  return spec.action_bound * gtp.cwiseMin(0.0).sum();
}

double hamiltonian_general(const ProblemSpec& spec, const Vec& x, const Vec& p, const Vec& btilde_x) {
  if (x.size() != spec.dim || p.size() != spec.dim || btilde_x.size() != spec.dim)
    throw invalid_argument("hamiltonian_general: dimension mismatch");
  if (!x.allFinite() || !p.allFinite() || !btilde_x.allFinite())
    throw invalid_argument("hamiltonian_general: non-finite input");
  return (spec.drift_base - btilde_x).dot(p) + hamiltonian_bar(spec, p) + spec.holding_cost.dot(x);
}

WeightFn WeightFn::make(int dim, double alpha0) {
  if (dim < 1 || !(alpha0 >= 1.0)) throw invalid_argument("weight: need dim >= 1 and alpha0 >= 1");
  return {alpha0, std::pow(std::log(static_cast<double>(dim)), alpha0 / 2.0)};
}

double weight(const WeightFn& w, const Vec& x) {
  const double norm = x.size() == 0 ? 0.0 : x.cwiseAbs().maxCoeff();
  return 1.0 + w.log_dim_term + std::pow(norm, w.alpha0);
}

Vec policy_readout(const Vec& grad, const ProblemSpec& spec) {
  const Vec gtp = spec.control_matrix.transpose() * grad;
  Vec a(gtp.size());
  for (Eigen::Index k = 0; k < gtp.size(); ++k) a(k) = gtp(k) <= 0.0 ? spec.action_bound : 0.0;
  return a;
}

}  // namespace rmlp
