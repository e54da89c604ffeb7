#include "pplearn/simulate.hpp"

#include "pplearn/errors.hpp"

#include <cmath>

namespace pplearn {

namespace {

constexpr std::uint64_t kEffectsTag = 0;
constexpr std::uint64_t kUserTagBase = 1000;

}  // namespace

std::string_view scenario_name(Scenario s) {
  return s == Scenario::NonSparse ? "nonsparse" : "sparse";
}

Scenario parse_scenario(std::string_view name) {
  if (name == "nonsparse" || name == "non-sparse") {
    return Scenario::NonSparse;
  }
  if (name == "sparse") {
    return Scenario::Sparse;
  }
  throw ConfigError("unknown scenario '" + std::string(name) + "'");
}

ScenarioSpec ScenarioSpec::standard(Family family, Scenario scenario, int m) {
  ScenarioSpec spec;
  spec.family = family;
  spec.beta0.resize(kSimulationTerms);
  spec.beta0 << -1.0, 0.2, -1.5, 0.8, 0.7, 0.1, 0.2, -1.2, -1.4;
  spec.re_variances.resize(kSimulationTerms);
  if (scenario == Scenario::NonSparse) {
    spec.re_variances << 2.0, 0.1, 0.1, 3.0, 4.0, 4.0, 5.0, 10.0, 12.0;
  } else {
    spec.re_variances << 2.0, 0.1, 0.1, 3.0, 0.0, 0.0, 5.0, 10.0, 12.0;
  }
  spec.m = m;
  return spec;
}

void ScenarioSpec::validate() const {
  if (beta0.size() != kSimulationTerms || re_variances.size() != kSimulationTerms) {
    throw ConfigError("scenario needs 9 fixed effects and 9 random-effect variances");
  }
  if (!beta0.allFinite() || !re_variances.allFinite() || (re_variances.array() < 0.0).any()) {
    throw ConfigError("random-effect variances must be finite and nonnegative");
  }
  if (n < 2 || m < 1 || test_horizon < 0 || n_trials < 1) {
    throw ConfigError("scenario needs n >= 2, m >= 1, test_horizon >= 0 and trials >= 1");
  }
  if (!(noise_sd > 0.0) || !std::isfinite(noise_sd)) {
    throw ConfigError("noise_sd must be positive");
  }
}

ModelSpec simulation_model(Family family) {
  ModelSpec probe(family, {"X", "time"}, ActionCoding::uniform(kSimulationActions), {"X", "time"}, {});
  std::vector<std::string> all;
  for (const auto& term : probe.terms()) {
    all.push_back(term.name);
  }
  return ModelSpec(family, {"X", "time"}, ActionCoding::uniform(kSimulationActions), {"X", "time"},
                   all);
}

std::vector<State> simulation_eval_states(const ScenarioSpec& spec) {
  std::vector<State> out;
  for (int t = spec.m + 1; t <= spec.m + spec.test_horizon; ++t) {
    for (double x : {-1.0, 1.0}) {
      out.push_back(State{{x, static_cast<double>(t)}, t});
    }
  }
  return out;
}

RandomEffects sample_random_effects(const ScenarioSpec& spec, Rng& rng) {
  spec.validate();
  RandomEffects out;
  out.alpha0.resize(spec.n, kSimulationTerms);
  for (Index i = 0; i < spec.n; ++i) {
    for (Index j = 0; j < kSimulationTerms; ++j) {
      const double z = rng.normal();
      const double var = spec.re_variances[j];
      out.alpha0(i, j) = var > 0.0 ? std::sqrt(var) * z : 0.0;
    }
  }
  out.u0.resize(spec.n);
  for (Index i = 0; i < spec.n; ++i) {
    out.u0[i] = rng.uniform();
  }
  return out;
}

double transition_probability(double y_prev, double x_prev, int a_prev, double shift) {
  return expit((-3.0 * y_prev + 2.0 * x_prev - static_cast<double>(a_prev - 2)) / 10.0 + shift);
}

Trajectory gen_trajectory(const ScenarioSpec& spec, const ModelSpec& model,
                          const VectorXd& alpha_row, double u0, Rng& rng, std::string user_id) {
  const int horizon = spec.m + spec.test_horizon;
  if (horizon < 1) {
    throw ConfigError("trajectory horizon must be at least 1");
  }
  const VectorXd coef = spec.beta0 + alpha_row;
  // Random-effect shift of the covariate transition: alpha_4 - alpha_5 + alpha_6 - alpha_7.
  const double shift = alpha_row[3] - alpha_row[4] + alpha_row[5] - alpha_row[6];

  Trajectory traj;
  traj.user_id = std::move(user_id);
  traj.steps.reserve(static_cast<std::size_t>(horizon));
  VectorXd h1(model.p());
  double x_prev = 0.0;
  double y_prev = 0.0;
  int a_prev = 2;
  for (int t = 1; t <= horizon; ++t) {
    double p_x = u0;
    if (t > 1) {
      p_x = transition_probability(y_prev, x_prev, a_prev, shift);
    }
    const double x = rng.bernoulli(p_x) ? 1.0 : -1.0;
    const int a = rng.uniform_label(kSimulationActions);

    Step step;
    step.state.covariates = {x, static_cast<double>(t)};
    step.state.time_index = t;
    step.action = a;
    step.propensity = 1.0 / kSimulationActions;
    model.h1_into(step.state, a, h1);
    const double eta = h1.dot(coef);
    if (spec.family == Family::Gaussian) {
      step.outcome = eta + spec.noise_sd * rng.normal();
    } else {
      step.outcome = rng.bernoulli(expit(eta)) ? 1.0 : 0.0;
    }
    traj.steps.push_back(step);
    x_prev = x;
    y_prev = step.outcome;
    a_prev = a;
  }
  return traj;
}

std::vector<Trajectory> SimulatedTrial::train() const {
  std::vector<Trajectory> out;
  out.reserve(trajectories.size());
  for (const auto& traj : trajectories) {
    Trajectory t{traj.user_id, {}};
    for (const auto& s : traj.steps) {
      if (s.state.time_index <= train_horizon) {
        t.steps.push_back(s);
      }
    }
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<Trajectory> SimulatedTrial::test() const {
  std::vector<Trajectory> out;
  out.reserve(trajectories.size());
  for (const auto& traj : trajectories) {
    Trajectory t{traj.user_id, {}};
    for (const auto& s : traj.steps) {
      if (s.state.time_index > train_horizon) {
        t.steps.push_back(s);
      }
    }
    out.push_back(std::move(t));
  }
  return out;
}

SimulatedTrial gen_trial(const ScenarioSpec& spec, int trial_index) {
  spec.validate();
  if (trial_index < 0) {
    throw ConfigError("trial index must be nonnegative");
  }
  const auto k = static_cast<std::uint64_t>(trial_index);
  SimulatedTrial trial;
  trial.index = trial_index;
  trial.train_horizon = spec.m;
  Rng effects_rng = Rng::substream(spec.seed, k, kEffectsTag);
  trial.effects = sample_random_effects(spec, effects_rng);

  const ModelSpec model = simulation_model(spec.family);
  trial.trajectories.reserve(static_cast<std::size_t>(spec.n));
  for (Index i = 0; i < spec.n; ++i) {
    Rng user_rng = Rng::substream(spec.seed, k, kUserTagBase + static_cast<std::uint64_t>(i));
    trial.trajectories.push_back(gen_trajectory(spec, model,
                                                trial.effects.alpha0.row(i).transpose(),
                                                trial.effects.u0[i], user_rng,
                                                "u" + std::to_string(i + 1)));
  }
  return trial;
}

void gen_study(const ScenarioSpec& spec, const std::function<void(const SimulatedTrial&)>& sink) {
  spec.validate();
  for (int k = 0; k < spec.n_trials; ++k) {
    sink(gen_trial(spec, k));
  }
}

Trajectory gen_appendix_example(int which, const AppendixParams& params, int horizon, Rng& rng) {
  if (which != 1 && which != 2) {
    throw ConfigError("appendix example must be 1 or 2");
  }
  if (horizon < 1) {
    throw ConfigError("horizon must be at least 1");
  }
  const double slope = params.beta0 + params.alpha0;
  if (which == 2 && !(std::abs(slope) < 1.0)) {
    throw ConfigError("example 2 needs |beta0 + alpha0| < 1 for stationarity");
  }
  Trajectory traj;
  traj.user_id = "example" + std::to_string(which);
  double y_prev = params.mu0;
  for (int t = 1; t <= horizon; ++t) {
    Step step;
    const int label = rng.uniform_label(2);
    const double a = label == 2 ? 1.0 : -1.0;
    double s = 0.0;
    if (which == 1) {
      s = params.alpha0 + params.tau * rng.normal();
      step.outcome = rng.bernoulli(expit(slope * s * a)) ? 1.0 : 0.0;
    } else {
      s = y_prev;
      step.outcome = slope * s * a + params.sigma * rng.normal();
      y_prev = step.outcome;
    }
    step.state.covariates = {s};
    step.state.time_index = t;
    step.action = label;
    step.propensity = 0.5;
    traj.steps.push_back(step);
  }
  return traj;
}

MatrixXd appendix_features(const Trajectory& traj) {
  MatrixXd h(static_cast<Index>(traj.steps.size()), 1);
  for (std::size_t t = 0; t < traj.steps.size(); ++t) {
    const auto& s = traj.steps[t];
    h(static_cast<Index>(t), 0) = s.state.covariates.at(0) * (s.action == 2 ? 1.0 : -1.0);
  }
  return h;
}

}  // namespace pplearn
