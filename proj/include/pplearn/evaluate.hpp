#pragma once

#include "pplearn/glm.hpp"
#include "pplearn/model.hpp"
#include "pplearn/solver.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pplearn {

enum class Method { PPL, GEE, MGLM };

std::string_view method_name(Method method);
Method parse_method(std::string_view name);

/// Per-user decision rules: row i of coef is user i's full h1 coefficient vector
/// (beta plus the user's random effects placed at the h2 coordinates). NaN marks
/// a coefficient the user's data cannot identify; it counts as zero in decisions.
struct PolicyTable {
  Method method = Method::PPL;
  ModelSpec spec;
  std::vector<std::string> user_ids;
  MatrixXd coef;                // n x p
  std::vector<bool> divergent;  // per-user fitting failure (MGLM)

  Index n() const { return coef.rows(); }
  std::optional<Index> find_user(std::string_view id) const;
  /// argmax over actions of h1'coef_i; ties go to the smallest label.
  int decide(Index user, const State& state) const;
  /// Predicted mean outcome of every action, label order.
  VectorXd action_means(Index user, const State& state) const;
};

MatrixXd user_coefficients(const ModelSpec& spec, const VectorXd& beta, const MatrixXd& alpha);

PolicyTable policy_table(const FitResult& fit, const ModelSpec& spec,
                         std::vector<std::string> user_ids);

/// The data-generating coefficients of each user.
struct GroundTruth {
  Family family = Family::Gaussian;
  VectorXd beta0;
  MatrixXd alpha0;  // n x q in h2 order
  std::vector<std::string> user_ids;
};

/// Sum over users of ||coef_i(pi) - true_i(pi)||^2 / (n * dim(pi)), pi = action-dependent terms.
/// Any non-finite contribution makes the result +inf.
double mse_policy_params(const PolicyTable& table, const GroundTruth& truth);

/// MSE values above this (or non-finite) are reported as ">1E10".
inline constexpr double kMseDisplayCap = 1e10;
std::string format_mse(double mse);

/// True mean outcome of each user under each policy's decision at a state.
double value_at_state(const PolicyTable& table, const GroundTruth& truth, const State& state);
double optimal_value(const PolicyTable& table, const GroundTruth& truth, const State& state);
double worst_value(const PolicyTable& table, const GroundTruth& truth, const State& state);

/// (V - V_worst) / (V_opt - V_worst); 1 when V_opt equals V_worst.
double value_ratio(const PolicyTable& table, const GroundTruth& truth, const State& state);

/// Self-normalized inverse-propensity estimate of the mean outcome when each user
/// follows their policy. Throws NumericError when no step agrees with the policy.
double iptw_response_rate(const PolicyTable& table, std::span<const Trajectory> test_data);

struct StateValue {
  State state;
  double value_ratio = 0.0;
};

struct MethodReport {
  Method method = Method::PPL;
  std::optional<double> mse;  // needs ground truth
  std::vector<StateValue> vr;
  double mean_vr = 0.0;
  std::optional<double> iptw;
  std::string iptw_note;  // why iptw is missing
  int divergent_users = 0;
};

struct EvalReport {
  std::vector<std::string> covariates;  // names of the state coordinates
  std::vector<MethodReport> methods;
};

/// MSE against the truth and value ratios at eval_states when truth is given; IPTW when
/// test steps exist.
MethodReport evaluate_policy(const PolicyTable& table, const GroundTruth* truth,
                             std::span<const State> eval_states,
                             std::span<const Trajectory> test_data);

/// Pooled GLM on h1 (independence working correlation); identical rule for all users.
PolicyTable gee_fit(const Design& design, const ModelSpec& spec, std::vector<std::string> user_ids,
                    const GlmOptions& opts = {});

/// Separate GLM on each user's own data; failures are flagged, coefficients kept.
PolicyTable mglm_fit(const Design& design, const ModelSpec& spec,
                     std::vector<std::string> user_ids, const GlmOptions& opts = {});

}  // namespace pplearn
