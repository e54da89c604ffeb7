#include "pplearn/errors.hpp"
#include "pplearn/glm.hpp"
#include "pplearn/simulate.hpp"

#include <doctest.h>

#include <cmath>

using namespace pplearn;

namespace {

bool same_steps(const Trajectory& a, const Trajectory& b, std::size_t count) {
  if (a.steps.size() < count || b.steps.size() < count) {
    return false;
  }
  for (std::size_t t = 0; t < count; ++t) {
    const Step& x = a.steps[t];
    const Step& y = b.steps[t];
    if (x.state.covariates != y.state.covariates || x.action != y.action ||
        x.outcome != y.outcome || x.propensity != y.propensity) {
      return false;
    }
  }
  return true;
}

double sample_var(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) {
    mean += x;
  }
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) {
    ss += (x - mean) * (x - mean);
  }
  return ss / static_cast<double>(v.size() - 1);
}

}  // namespace

TEST_CASE("scenario parameters") {
  const ScenarioSpec dense = ScenarioSpec::standard(Family::Gaussian, Scenario::NonSparse, 10);
  const ScenarioSpec sparse = ScenarioSpec::standard(Family::Gaussian, Scenario::Sparse, 30);
  CHECK(dense.n == 50);
  CHECK(dense.test_horizon == 10);
  CHECK(dense.noise_sd == 1.5);
  CHECK(sparse.m == 30);
  CHECK(sparse.re_variances[4] == 0.0);
  CHECK(sparse.re_variances[5] == 0.0);
  CHECK(dense.re_variances[4] == 4.0);
  ScenarioSpec bad = dense;
  bad.re_variances[0] = -1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK(parse_scenario("sparse") == Scenario::Sparse);
  CHECK_THROWS_AS(parse_scenario("dense"), ConfigError);
}

TEST_CASE("random effects have the configured variances") {
  ScenarioSpec sc = ScenarioSpec::standard(Family::Gaussian, Scenario::NonSparse, 10);
  sc.n = 10000;
  Rng rng(61);
  const RandomEffects re = sample_random_effects(sc, rng);
  for (Index j = 0; j < 9; ++j) {
    const auto col = re.alpha0.col(j);
    const double mean = col.mean();
    const double var = (col.array() - mean).square().sum() / (sc.n - 1.0);
    CHECK(std::abs(var / sc.re_variances[j] - 1.0) < 0.1);
  }
  CHECK(re.u0.minCoeff() >= 0.0);
  CHECK(re.u0.maxCoeff() < 1.0);

  sc.re_variances = ScenarioSpec::standard(Family::Gaussian, Scenario::Sparse, 10).re_variances;
  Rng rng2(62);
  const RandomEffects sparse = sample_random_effects(sc, rng2);
  CHECK(sparse.alpha0.col(4).cwiseAbs().maxCoeff() == 0.0);
  CHECK(sparse.alpha0.col(5).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("covariate transition") {
  CHECK(transition_probability(0.0, 1.0, 2, 0.0) == doctest::Approx(expit(0.2)).epsilon(1e-15));
  CHECK(transition_probability(0.0, 0.0, 2, 0.0) == 0.5);
  CHECK(transition_probability(1.0, -1.0, 3, 0.5) == doctest::Approx(expit(-0.6 + 0.5)));
}

TEST_CASE("trajectories follow an independent re-implementation of the generator") {
  const ScenarioSpec sc = ScenarioSpec::standard(Family::Gaussian, Scenario::NonSparse, 10);
  const ModelSpec model = simulation_model(Family::Gaussian);
  Rng effects(63);
  VectorXd alpha(9);
  for (Index j = 0; j < 9; ++j) {
    alpha[j] = std::sqrt(sc.re_variances[j]) * effects.normal();
  }
  const double u0 = 0.3;
  Rng a(64);
  Rng b(64);
  const Trajectory traj = gen_trajectory(sc, model, alpha, u0, a, "u");
  REQUIRE(traj.steps.size() == 20);

  const VectorXd coef = sc.beta0 + alpha;
  const double shift = alpha[3] - alpha[4] + alpha[5] - alpha[6];
  double x_prev = 0.0;
  double y_prev = 0.0;
  int a_prev = 2;
  for (int t = 1; t <= 20; ++t) {
    const double p = t == 1 ? u0 : 1.0 / (1.0 + std::exp(-((-3.0 * y_prev + 2.0 * x_prev -
                                                              (a_prev - 2)) / 10.0 + shift)));
    const double x = b.bernoulli(p) ? 1.0 : -1.0;
    const int act = b.uniform_label(3);
    const double d2 = (act == 2 ? 1.0 : 0.0) - 1.0 / 3;
    const double d3 = (act == 3 ? 1.0 : 0.0) - 1.0 / 3;
    const double eta = coef[0] + coef[1] * x + coef[2] * t + coef[3] * d2 + coef[4] * d3 +
                       coef[5] * x * d2 + coef[6] * x * d3 + coef[7] * t * d2 + coef[8] * t * d3;
    const double y = eta + 1.5 * b.normal();
    const Step& s = traj.steps[static_cast<std::size_t>(t - 1)];
    CHECK(s.state.covariates[0] == x);
    CHECK(s.state.covariates[1] == t);
    CHECK(s.action == act);
    CHECK(s.outcome == doctest::Approx(y).epsilon(1e-12));
    CHECK(s.propensity == doctest::Approx(1.0 / 3));
    x_prev = x;
    y_prev = s.outcome;
    a_prev = act;
  }
}

TEST_CASE("trials are deterministic, isolated and seed dependent") {
  ScenarioSpec sc = ScenarioSpec::standard(Family::Bernoulli, Scenario::NonSparse, 10);
  sc.n_trials = 4;
  const SimulatedTrial t3 = gen_trial(sc, 3);
  const SimulatedTrial again = gen_trial(sc, 3);
  for (std::size_t i = 0; i < t3.trajectories.size(); ++i) {
    CHECK(same_steps(t3.trajectories[i], again.trajectories[i], 20));
  }
  int seen = 0;
  gen_study(sc, [&](const SimulatedTrial& trial) {
    CHECK(trial.index == seen);
    if (trial.index == 3) {
      CHECK(same_steps(trial.trajectories[7], t3.trajectories[7], 20));
      CHECK(trial.effects.alpha0 == t3.effects.alpha0);
    }
    ++seen;
  });
  CHECK(seen == 4);
  CHECK_FALSE(same_steps(gen_trial(sc, 2).trajectories[0], t3.trajectories[0], 20));
  sc.seed = 2;
  CHECK_FALSE(same_steps(gen_trial(sc, 3).trajectories[0], t3.trajectories[0], 20));
  CHECK_THROWS_AS(gen_trial(sc, -1), ConfigError);
}

TEST_CASE("longer horizons extend the same paths") {
  const SimulatedTrial short_trial =
      gen_trial(ScenarioSpec::standard(Family::Gaussian, Scenario::NonSparse, 10), 0);
  const SimulatedTrial long_trial =
      gen_trial(ScenarioSpec::standard(Family::Gaussian, Scenario::NonSparse, 30), 0);
  CHECK(short_trial.effects.alpha0 == long_trial.effects.alpha0);
  for (std::size_t i = 0; i < short_trial.trajectories.size(); ++i) {
    CHECK(same_steps(short_trial.trajectories[i], long_trial.trajectories[i], 20));
  }
}

TEST_CASE("train and test split at the training horizon") {
  const SimulatedTrial trial =
      gen_trial(ScenarioSpec::standard(Family::Gaussian, Scenario::NonSparse, 10), 0);
  const auto train = trial.train();
  const auto test = trial.test();
  REQUIRE(train.size() == 50);
  CHECK(train[0].steps.size() == 10);
  CHECK(test[0].steps.size() == 10);
  CHECK(train[0].steps.back().state.time_index == 10);
  CHECK(test[0].steps.front().state.time_index == 11);
  CHECK(train[0].user_id == "u1");
  CHECK_NOTHROW(validate_trajectories(train, 2, 3, Family::Gaussian));
}

TEST_CASE("actions are uniform and independent of the covariate") {
  const SimulatedTrial trial =
      gen_trial(ScenarioSpec::standard(Family::Bernoulli, Scenario::NonSparse, 30), 0);
  int counts[2][3] = {{0, 0, 0}, {0, 0, 0}};
  int total = 0;
  for (const auto& traj : trial.trajectories) {
    for (const auto& s : traj.steps) {
      ++counts[s.state.covariates[0] > 0 ? 1 : 0][s.action - 1];
      ++total;
    }
  }
  for (int a = 0; a < 3; ++a) {
    const double share = static_cast<double>(counts[0][a] + counts[1][a]) / total;
    CHECK(std::abs(share - 1.0 / 3) < 0.03);
  }
  for (int x = 0; x < 2; ++x) {
    const int row = counts[x][0] + counts[x][1] + counts[x][2];
    if (row > 300) {
      for (int a = 0; a < 3; ++a) {
        CHECK(std::abs(static_cast<double>(counts[x][a]) / row - 1.0 / 3) < 0.06);
      }
    }
  }
}

TEST_CASE("the covariate responds to the previous outcome") {
  ScenarioSpec sc = ScenarioSpec::standard(Family::Gaussian, Scenario::NonSparse, 30);
  sc.re_variances.setZero();
  sc.n = 200;
  const SimulatedTrial trial = gen_trial(sc, 0);
  std::vector<double> xs;
  std::vector<double> ys;
  for (const auto& traj : trial.trajectories) {
    for (std::size_t t = 1; t < traj.steps.size(); ++t) {
      xs.push_back(traj.steps[t].state.covariates[0]);
      ys.push_back(traj.steps[t - 1].outcome);
    }
  }
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    mx += xs[k];
    my += ys[k];
  }
  mx /= xs.size();
  my /= ys.size();
  double cov = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    cov += (xs[k] - mx) * (ys[k] - my);
  }
  const double corr = cov / (xs.size() - 1.0) / std::sqrt(sample_var(xs) * sample_var(ys));
  CHECK(corr < -0.2);
}

TEST_CASE("appendix example 1") {
  AppendixParams params;
  params.beta0 = 0.8;
  params.alpha0 = 0.4;
  params.tau = 1.5;
  Rng rng(65);
  const Trajectory traj = gen_appendix_example(1, params, 20000, rng);
  std::vector<double> s;
  int ones = 0;
  for (const auto& step : traj.steps) {
    s.push_back(step.state.covariates[0]);
    ones += step.action == 2 ? 1 : 0;
    CHECK((step.outcome == 0.0 || step.outcome == 1.0));
  }
  double mean = 0.0;
  for (double v : s) {
    mean += v;
  }
  mean /= s.size();
  CHECK(std::abs(mean - 0.4) < 0.05);
  CHECK(std::abs(std::sqrt(sample_var(s)) - 1.5) < 0.05);
  CHECK(std::abs(ones / 20000.0 - 0.5) < 0.02);

  VectorXd y(static_cast<Index>(traj.steps.size()));
  for (std::size_t t = 0; t < traj.steps.size(); ++t) {
    y[static_cast<Index>(t)] = traj.steps[t].outcome;
  }
  const GlmFit fit = fit_glm(Family::Bernoulli, appendix_features(traj), y);
  REQUIRE(fit.converged);
  CHECK(std::abs(fit.coef[0] - 1.2) < 0.1);
}

TEST_CASE("appendix example 2") {
  AppendixParams params;
  params.beta0 = 0.0;
  params.sigma = 2.0;
  Rng rng(66);
  const Trajectory iid = gen_appendix_example(2, params, 20000, rng);
  std::vector<double> y;
  for (const auto& step : iid.steps) {
    y.push_back(step.outcome);
  }
  CHECK(std::abs(sample_var(y) - 4.0) < 0.2);

  params.beta0 = 0.5;
  params.alpha0 = 0.2;
  params.sigma = 1.0;
  const double c = 0.7;
  const int horizon = 5;
  std::vector<std::vector<double>> by_t(horizon);
  for (int r = 0; r < 20000; ++r) {
    const Trajectory traj = gen_appendix_example(2, params, horizon, rng);
    for (int t = 0; t < horizon; ++t) {
      by_t[static_cast<std::size_t>(t)].push_back(traj.steps[static_cast<std::size_t>(t)].outcome);
    }
  }
  for (int t = 1; t <= horizon; ++t) {
    double expected = 0.0;
    for (int k = 1; k <= t; ++k) {
      expected += std::pow(c, 2.0 * (k - 1));
    }
    CHECK(std::abs(sample_var(by_t[static_cast<std::size_t>(t - 1)]) / expected - 1.0) < 0.05);
  }

  params.beta0 = 0.9;
  params.alpha0 = 0.1;
  CHECK_THROWS_AS(gen_appendix_example(2, params, 5, rng), ConfigError);
  CHECK_THROWS_AS(gen_appendix_example(3, params, 5, rng), ConfigError);
}
