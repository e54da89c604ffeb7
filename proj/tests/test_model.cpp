#include "pplearn/errors.hpp"
#include "pplearn/model.hpp"
#include "pplearn/simulate.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace pplearn;

TEST_CASE("simulation feature map at X=1, t=2, action 2") {
  const ModelSpec spec = simulation_model(Family::Gaussian);
  const VectorXd h1 = spec.h1(State{{1.0, 2.0}, 2}, 2);
  VectorXd expected(9);
  expected << 1, 1, 2, 2.0 / 3, -1.0 / 3, 2.0 / 3, -1.0 / 3, 4.0 / 3, -2.0 / 3;
  CHECK((h1 - expected).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("reference action at the zero state") {
  const ModelSpec spec = simulation_model(Family::Gaussian);
  const Features f = build_features(State{{0.0, 0.0}, 1}, make_action(1, spec.actions()), spec);
  VectorXd expected(9);
  expected << 1, 0, 0, -1.0 / 3, -1.0 / 3, 0, 0, 0, 0;
  CHECK((f.h1 - expected).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(f.h2 == f.h1);
}

TEST_CASE("h2 is the selected sub-vector of h1") {
  const ModelSpec spec(Family::Bernoulli, {"a", "b"}, ActionCoding({0.2, 0.5, 0.3}), {"b"},
                       {"intercept", "b:A3", "A2"});
  Rng rng(3);
  for (int k = 0; k < 50; ++k) {
    const State s{{rng.normal(), rng.normal()}, k + 1};
    const int label = rng.uniform_label(3);
    const Features f = build_features(s, make_action(label, spec.actions()), spec);
    REQUIRE(f.h2.size() == 3);
    CHECK(f.h2[0] == f.h1[0]);
    CHECK(f.h2[1] == f.h1[*spec.term_index("b:A3")]);
    CHECK(f.h2[2] == f.h1[*spec.term_index("A2")]);
  }
}

TEST_CASE("term order is intercept, covariates, dummies, interactions") {
  const ModelSpec spec(Family::Gaussian, {"a", "b"}, ActionCoding::uniform(3), {"b", "a"}, {});
  std::vector<std::string> names;
  for (const auto& t : spec.terms()) {
    names.push_back(t.name);
  }
  CHECK(names == std::vector<std::string>{"intercept", "a", "b", "A2", "A3", "b:A2", "b:A3",
                                          "a:A2", "a:A3"});
  CHECK(spec.policy_terms() == std::vector<int>{3, 4, 5, 6, 7, 8});
}

TEST_CASE("permuting interactions permutes h1 coordinates") {
  const ModelSpec ab(Family::Gaussian, {"a", "b"}, ActionCoding::uniform(3), {"a", "b"}, {});
  const ModelSpec ba(Family::Gaussian, {"a", "b"}, ActionCoding::uniform(3), {"b", "a"}, {});
  const State s{{0.7, -1.3}, 4};
  for (int label = 1; label <= 3; ++label) {
    const VectorXd x = ab.h1(s, label);
    const VectorXd y = ba.h1(s, label);
    for (const auto& term : ab.terms()) {
      CHECK(x[*ab.term_index(term.name)] == y[*ba.term_index(term.name)]);
    }
  }
}

TEST_CASE("centered dummies average to zero under their centering probabilities") {
  const ActionCoding coding({0.2, 0.5, 0.3});
  VectorXd total = VectorXd::Zero(2);
  for (int label = 1; label <= 3; ++label) {
    total += coding.probabilities()[static_cast<std::size_t>(label - 1)] * coding.dummy(label);
  }
  CHECK(total.cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("action coding validation") {
  CHECK_THROWS_AS(ActionCoding({1.0}), ConfigError);
  CHECK_THROWS_AS(ActionCoding({0.5, 0.6}), ConfigError);
  CHECK_THROWS_AS(ActionCoding({0.0, 1.0}), ConfigError);
  CHECK_THROWS_AS(ActionCoding::uniform(3).dummy(4), ConfigError);
}

TEST_CASE("model spec validation") {
  CHECK_THROWS_AS(ModelSpec(Family::Gaussian, {"a"}, ActionCoding::uniform(2), {"z"}, {}),
                  ConfigError);
  CHECK_THROWS_AS(ModelSpec(Family::Gaussian, {"a"}, ActionCoding::uniform(2), {}, {"nope"}),
                  ConfigError);
  CHECK_THROWS_AS(ModelSpec(Family::Gaussian, {"intercept"}, ActionCoding::uniform(2), {}, {}),
                  ConfigError);
  const ModelSpec spec(Family::Gaussian, {"a"}, ActionCoding::uniform(2), {}, {});
  CHECK_THROWS_AS(spec.h1(State{{1.0, 2.0}, 1}, 1), ConfigError);
}

TEST_CASE("linear predictor") {
  Parameters zero{VectorXd::Zero(3), MatrixXd::Zero(2, 2), 1.0};
  CHECK(linear_predictor(zero, 1, VectorXd::Ones(3), VectorXd::Ones(2)) == 0.0);

  Parameters p{VectorXd::Zero(3), MatrixXd::Zero(1, 1), 1.0};
  p.beta[0] = -1.80;
  p.alpha(0, 0) = 0.5;
  VectorXd h1 = VectorXd::Zero(3);
  h1[0] = 1.0;
  CHECK(linear_predictor(p, 0, h1, VectorXd::Ones(1)) == doctest::Approx(-1.30).epsilon(1e-15));

  Rng rng(11);
  const Parameters r = testing::random_params(4, 5, 3, rng);
  for (Index i = 0; i < 4; ++i) {
    VectorXd x1(5);
    VectorXd x2(3);
    for (Index j = 0; j < 5; ++j) {
      x1[j] = rng.normal();
    }
    for (Index j = 0; j < 3; ++j) {
      x2[j] = rng.normal();
    }
    double expected = 0.0;
    for (Index j = 0; j < 5; ++j) {
      expected += x1[j] * r.beta[j];
    }
    for (Index j = 0; j < 3; ++j) {
      expected += x2[j] * r.alpha(i, j);
    }
    CHECK(linear_predictor(r, i, x1, x2) == doctest::Approx(expected).epsilon(1e-14));
  }
  CHECK_THROWS_AS(linear_predictor(r, 4, VectorXd::Zero(5), VectorXd::Zero(3)), ConfigError);
}

TEST_CASE("inverse link") {
  CHECK(inverse_link(Family::Bernoulli, 0.0) == 0.5);
  CHECK(inverse_link(Family::Gaussian, -1.3) == -1.3);
  // High-precision reference: expit(-40) = 1 - expit(40) = 4.2483542552915890e-18.
  CHECK(std::abs(inverse_link(Family::Bernoulli, 40.0) - 1.0) < 1e-15);
  CHECK(std::abs(inverse_link(Family::Bernoulli, -40.0) - 4.248354255291589e-18) < 1e-15 * 4.3e-18);
  CHECK(std::isfinite(inverse_link(Family::Bernoulli, -1000.0)));
  CHECK(inverse_link(Family::Bernoulli, 1000.0) == 1.0);
  double prev = -1.0;
  for (double eta = -30.0; eta <= 30.0; eta += 0.5) {
    const double mu = inverse_link(Family::Bernoulli, eta);
    CHECK(mu > prev);
    prev = mu;
  }
  CHECK(log1p_exp(800.0) == 800.0);
  CHECK(log1p_exp(-800.0) == 0.0);
}

TEST_CASE("trajectory validation") {
  Trajectory t{"u", {}};
  t.steps.push_back(Step{State{{1.0}, 1}, 1, 1.0, 0.5});
  t.steps.push_back(Step{State{{1.0}, 2}, 2, 0.0, 0.5});
  std::vector<Trajectory> users{t};
  CHECK_NOTHROW(validate_trajectories(users, 1, 2, Family::Bernoulli));
  users[0].steps[1].state.time_index = 1;
  CHECK_THROWS_AS(validate_trajectories(users, 1, 2, Family::Bernoulli), ConfigError);
  users[0].steps[1].state.time_index = 2;
  users[0].steps[1].propensity = 0.0;
  CHECK_THROWS_AS(validate_trajectories(users, 1, 2, Family::Bernoulli), ConfigError);
  users[0].steps[1].propensity = 0.5;
  users[0].steps[1].outcome = 0.5;
  CHECK_THROWS_AS(validate_trajectories(users, 1, 2, Family::Bernoulli), ConfigError);
  CHECK_NOTHROW(validate_trajectories(users, 1, 2, Family::Gaussian));
  CHECK_THROWS_AS(validate_trajectories(users, 2, 2, Family::Gaussian), ConfigError);
}
