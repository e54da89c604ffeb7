#pragma once

#include "pplearn/evaluate.hpp"
#include "pplearn/io.hpp"
#include "pplearn/simulate.hpp"
#include "pplearn/solver.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace pplearn {

/// Parses "continuous-sparse", "binary-nonsparse" and similar scenario cells.
std::pair<Family, Scenario> parse_cell(std::string_view name);
std::string cell_name(Family family, Scenario scenario);

Json solver_to_json(const SolverConfig& cfg);
/// Starts from base and overrides the fields present in j; unknown keys are rejected.
SolverConfig solver_from_json(const Json& j, const SolverConfig& base = {});

struct SimulateConfig {
  Family family = Family::Gaussian;
  Scenario scenario = Scenario::NonSparse;
  int m = 10;
  int n = 50;
  int test_horizon = 10;
  int trials = 1;
  std::uint64_t seed = 1;
  int jobs = 1;
  std::string out;

  ScenarioSpec scenario_spec() const;
};

struct FitConfig {
  std::string data;
  std::string out;
  Method method = Method::PPL;
  std::optional<double> lambda;        // fixed lambda instead of the AIC path
  std::optional<std::string> model;    // model JSON file; default is the dataset's model
  SolverConfig solver;
  bool allow_nonconvergence = false;
};

struct EvaluateConfig {
  std::string data;
  std::vector<std::string> fits;  // fit directories
  std::string out;
};

struct PolicyQuery {
  std::string fit;  // fit directory
  std::string user;
  std::vector<double> covariates;
  int t = 1;
};

struct ReproduceConfig {
  std::vector<Family> families{Family::Gaussian, Family::Bernoulli};
  std::vector<Scenario> scenarios{Scenario::NonSparse, Scenario::Sparse};
  std::vector<int> ms{10, 20, 30};
  std::vector<Method> methods{Method::PPL, Method::GEE, Method::MGLM};
  int trials = 50;
  int n = 50;
  int test_horizon = 10;
  std::uint64_t seed = 1;
  int jobs = 1;
  std::string out;
  SolverConfig solver;
};

Json to_json(const SimulateConfig& c);
Json to_json(const FitConfig& c);
Json to_json(const EvaluateConfig& c);
Json to_json(const PolicyQuery& c);
Json to_json(const ReproduceConfig& c);
SimulateConfig simulate_config_from_json(const Json& j);
FitConfig fit_config_from_json(const Json& j);
EvaluateConfig evaluate_config_from_json(const Json& j);
PolicyQuery policy_query_from_json(const Json& j);
ReproduceConfig reproduce_config_from_json(const Json& j);

/// Model used when neither the dataset nor the config names one: every covariate
/// interacts with the actions and every term carries a random effect.
ModelSpec default_model(const DatasetSchema& schema);

/// Writes out/trial_NNN/{trajectories.csv, schema.json, truth.json} and out/config.json.
void run_simulate(const SimulateConfig& cfg);

/// Fits one method on the training segment of a dataset.
FitFile fit_dataset(const Dataset& data, const ModelSpec& spec, const FitConfig& cfg);

/// Writes fit.json, policy.csv, config.json and timing.json into cfg.out. Throws
/// NumericError after writing when the fit did not converge and that is not allowed.
FitFile run_fit(const FitConfig& cfg);

/// Writes report.json, report.csv and config.json into cfg.out.
EvalReport run_evaluate(const EvaluateConfig& cfg);

/// Recommended action and per-action predicted means for one user and state.
Json run_policy(const PolicyQuery& q);

/// Outcome of one method on one simulated trial.
struct TrialRecord {
  Family family = Family::Gaussian;
  Scenario scenario = Scenario::NonSparse;
  int m = 0;
  int trial = 0;
  Method method = Method::PPL;
  double mse = 0.0;
  std::vector<double> vr;  // at simulation_eval_states order
  double mean_vr = 0.0;
  double beta_error = 0.0;          // ||beta_hat - beta0||^2 (PPL and GEE)
  double alpha_error_median = 0.0;  // median over users of ||alpha_hat_i - alpha0_i||^2 (PPL)
  std::vector<int> active_groups;   // PPL
  double lambda = 0.0;
  bool converged = true;
  int divergent_users = 0;
  std::string error;  // non-empty when the method failed on this trial
};

/// Simulates and fits every (family, scenario, m, trial) in cfg, in parallel over
/// trials. The result order depends only on cfg.
std::vector<TrialRecord> run_grid(const ReproduceConfig& cfg);

/// Per-cell summary of a set of trial records.
struct CellSummary {
  Family family = Family::Gaussian;
  Scenario scenario = Scenario::NonSparse;
  int m = 0;
  Method method = Method::PPL;
  int trials = 0;
  int failures = 0;
  double mean_mse = 0.0;
  double sd_mse = 0.0;
  double median_mse = 0.0;
  double frac_over_cap = 0.0;  // share of trials with MSE above 1e10
  double mean_vr = 0.0;
  double converged_fraction = 0.0;
  std::vector<double> vr_mean;  // per evaluation state
  std::vector<double> vr_sd;
};

std::vector<CellSummary> summarize(const std::vector<TrialRecord>& records);

/// Runs the grid and writes table.csv, vr.csv, trials.csv, config.json and timing.json.
std::vector<CellSummary> run_reproduce(const ReproduceConfig& cfg);

}  // namespace pplearn
