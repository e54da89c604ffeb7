#pragma once

#include "pplearn/model.hpp"
#include "pplearn/rng.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace pplearn {

enum class Scenario { NonSparse, Sparse };

std::string_view scenario_name(Scenario s);
Scenario parse_scenario(std::string_view name);

/// Simulation design with an endogenous binary covariate X in {-1, 1}, time t,
/// three equiprobable actions and h1 = h2 = (1, S, A, S (x) A), S = (X, t).
struct ScenarioSpec {
  Family family = Family::Gaussian;
  VectorXd beta0;
  VectorXd re_variances;  // diagonal of Var(alpha_0i)
  double noise_sd = 1.5;
  int n = 50;
  int m = 10;
  int test_horizon = 10;
  int n_trials = 200;
  std::uint64_t seed = 1;

  static ScenarioSpec standard(Family family, Scenario scenario, int m);
  void validate() const;
};

inline constexpr int kSimulationActions = 3;
inline constexpr int kSimulationTerms = 9;

/// The model the simulation draws from; every h1 term carries a random effect.
ModelSpec simulation_model(Family family);

/// Value-ratio evaluation states: X in {-1, 1} at every test time point.
std::vector<State> simulation_eval_states(const ScenarioSpec& spec);

struct RandomEffects {
  MatrixXd alpha0;  // n x 9, in h1 term order
  VectorXd u0;      // P(X_1 = 1) per user
};

RandomEffects sample_random_effects(const ScenarioSpec& spec, Rng& rng);

/// P(X_t = 1) given the previous outcome, covariate and action label, for a user whose
/// random effects shift the transition logit by `shift`.
double transition_probability(double y_prev, double x_prev, int a_prev, double shift);

/// One user's path over m + test_horizon steps.
Trajectory gen_trajectory(const ScenarioSpec& spec, const ModelSpec& model,
                          const VectorXd& alpha_row, double u0, Rng& rng, std::string user_id);

struct SimulatedTrial {
  int index = 0;
  int train_horizon = 0;
  std::vector<Trajectory> trajectories;
  RandomEffects effects;

  std::vector<Trajectory> train() const;
  std::vector<Trajectory> test() const;
};

/// Trial k draws from substreams of (seed, k), so it can be regenerated alone.
SimulatedTrial gen_trial(const ScenarioSpec& spec, int trial_index);

/// Streams spec.n_trials trials to the callback in index order.
void gen_study(const ScenarioSpec& spec, const std::function<void(const SimulatedTrial&)>& sink);

struct AppendixParams {
  double beta0 = 0.5;
  double alpha0 = 0.0;
  double tau = 1.0;    // example 1: sd of S_t
  double sigma = 1.0;  // example 2: outcome noise sd
  double mu0 = 0.0;    // example 2: Y_0
};

/// Single-user fixtures with a scalar random effect and A_t in {-1, 1}
/// (stored as labels 1 and 2). Example 1: binary Y, S_t ~ N(alpha0, tau^2).
/// Example 2: Gaussian AR(1)-type Y with S_t = Y_{t-1}; needs |beta0 + alpha0| < 1.
Trajectory gen_appendix_example(int which, const AppendixParams& params, int horizon, Rng& rng);

/// The scalar feature S_t * A_t of each step of an appendix trajectory.
MatrixXd appendix_features(const Trajectory& traj);

}  // namespace pplearn
