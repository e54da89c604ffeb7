#include "pplearn/model.hpp"

#include "pplearn/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace pplearn {

std::string_view family_name(Family family) {
  return family == Family::Gaussian ? "gaussian" : "bernoulli";
}

Family parse_family(std::string_view name) {
  if (name == "gaussian" || name == "continuous" || name == "gaussian-identity") {
    return Family::Gaussian;
  }
  if (name == "bernoulli" || name == "binary" || name == "bernoulli-logit") {
    return Family::Bernoulli;
  }
  throw ConfigError("unknown outcome family '" + std::string(name) + "'");
}

ActionCoding::ActionCoding(std::vector<double> probabilities) : probs_(std::move(probabilities)) {
  if (probs_.size() < 2) {
    throw ConfigError("action space needs at least two actions");
  }
  double total = 0.0;
  for (double p : probs_) {
    if (!(p > 0.0 && p < 1.0)) {
      throw ConfigError("action centering probabilities must lie in (0, 1)");
    }
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ConfigError("action centering probabilities must sum to 1");
  }
}

ActionCoding ActionCoding::uniform(int num_actions) {
  if (num_actions < 2) {
    throw ConfigError("action space needs at least two actions");
  }
  return ActionCoding(std::vector<double>(static_cast<std::size_t>(num_actions),
                                          1.0 / num_actions));
}

void ActionCoding::dummy_into(int label, Eigen::Ref<VectorXd> out) const {
  const int k = num_actions();
  if (label < 1 || label > k) {
    throw ConfigError("action label " + std::to_string(label) + " outside 1.." +
                      std::to_string(k));
  }
  for (int j = 0; j < k - 1; ++j) {
    out[j] = (label == j + 2 ? 1.0 : 0.0) - probs_[static_cast<std::size_t>(j + 1)];
  }
}

VectorXd ActionCoding::dummy(int label) const {
  VectorXd d(num_actions() - 1);
  dummy_into(label, d);
  return d;
}

Action make_action(int label, const ActionCoding& coding) {
  return Action{label, coding.dummy(label)};
}

void validate_trajectories(std::span<const Trajectory> users, std::size_t num_covariates,
                           int num_actions, std::optional<Family> family) {
  for (const auto& traj : users) {
    if (traj.steps.empty()) {
      throw ConfigError("user '" + traj.user_id + "' has no steps");
    }
    int last_t = std::numeric_limits<int>::min();
    for (const auto& step : traj.steps) {
      if (step.state.time_index <= last_t) {
        throw ConfigError("user '" + traj.user_id + "': time index not strictly increasing");
      }
      last_t = step.state.time_index;
      if (step.state.covariates.size() != num_covariates) {
        throw ConfigError("user '" + traj.user_id + "': covariate dimension mismatch");
      }
      if (step.action < 1 || step.action > num_actions) {
        throw ConfigError("user '" + traj.user_id + "': action label out of range");
      }
      if (!(step.propensity > 0.0 && step.propensity <= 1.0)) {
        throw ConfigError("user '" + traj.user_id + "': propensity must lie in (0, 1]");
      }
      if (!std::isfinite(step.outcome)) {
        throw ConfigError("user '" + traj.user_id + "': non-finite outcome");
      }
      if (family == Family::Bernoulli && step.outcome != 0.0 && step.outcome != 1.0) {
        throw ConfigError("user '" + traj.user_id + "': binary outcome must be 0 or 1");
      }
    }
  }
}

ModelSpec::ModelSpec(Family family, std::vector<std::string> covariates, ActionCoding actions,
                     std::vector<std::string> interactions, std::vector<std::string> h2_terms)
    : family_(family),
      covariates_(std::move(covariates)),
      actions_(std::move(actions)),
      interactions_(std::move(interactions)) {
  auto covariate_index = [&](const std::string& name) {
    auto it = std::find(covariates_.begin(), covariates_.end(), name);
    if (it == covariates_.end()) {
      throw ConfigError("interaction refers to unknown covariate '" + name + "'");
    }
    return static_cast<int>(it - covariates_.begin());
  };

  terms_.push_back({TermKind::Intercept, -1, -1, "intercept"});
  for (int c = 0; c < static_cast<int>(covariates_.size()); ++c) {
    if (covariates_[static_cast<std::size_t>(c)] == "intercept") {
      throw ConfigError("'intercept' is reserved and cannot name a covariate");
    }
    terms_.push_back({TermKind::Covariate, c, -1, covariates_[static_cast<std::size_t>(c)]});
  }
  const int num_dummies = actions_.num_actions() - 1;
  for (int a = 0; a < num_dummies; ++a) {
    terms_.push_back({TermKind::ActionDummy, -1, a, "A" + std::to_string(a + 2)});
  }
  for (const auto& name : interactions_) {
    const int c = covariate_index(name);
    if (std::find(interaction_cov_.begin(), interaction_cov_.end(), c) != interaction_cov_.end()) {
      throw ConfigError("duplicate interaction '" + name + "'");
    }
    interaction_cov_.push_back(c);
    for (int a = 0; a < num_dummies; ++a) {
      terms_.push_back({TermKind::Interaction, c, a, name + ":A" + std::to_string(a + 2)});
    }
  }

  for (const auto& name : h2_terms) {
    auto idx = term_index(name);
    if (!idx) {
      throw ConfigError("random-effect term '" + name + "' is not an h1 term");
    }
    if (std::find(h2_index_.begin(), h2_index_.end(), *idx) != h2_index_.end()) {
      throw ConfigError("duplicate random-effect term '" + name + "'");
    }
    h2_index_.push_back(*idx);
  }
}

std::vector<std::string> ModelSpec::h2_terms() const {
  std::vector<std::string> names;
  names.reserve(h2_index_.size());
  for (int j : h2_index_) {
    names.push_back(terms_[static_cast<std::size_t>(j)].name);
  }
  return names;
}

std::vector<int> ModelSpec::policy_terms() const {
  std::vector<int> out;
  for (int j = 0; j < static_cast<int>(terms_.size()); ++j) {
    const auto kind = terms_[static_cast<std::size_t>(j)].kind;
    if (kind == TermKind::ActionDummy || kind == TermKind::Interaction) {
      out.push_back(j);
    }
  }
  return out;
}

std::optional<int> ModelSpec::term_index(std::string_view name) const {
  for (int j = 0; j < static_cast<int>(terms_.size()); ++j) {
    if (terms_[static_cast<std::size_t>(j)].name == name) {
      return j;
    }
  }
  return std::nullopt;
}

void ModelSpec::h1_into(const State& state, int action_label, Eigen::Ref<VectorXd> h1) const {
  if (state.covariates.size() != covariates_.size()) {
    throw ConfigError("state has " + std::to_string(state.covariates.size()) +
                      " covariates, model expects " + std::to_string(covariates_.size()));
  }
  if (h1.size() != p()) {
    throw ConfigError("feature buffer has wrong length");
  }
  const int num_dummies = actions_.num_actions() - 1;
  VectorXd dummy(num_dummies);
  actions_.dummy_into(action_label, dummy);

  Index j = 0;
  h1[j++] = 1.0;
  for (double x : state.covariates) {
    h1[j++] = x;
  }
  for (int a = 0; a < num_dummies; ++a) {
    h1[j++] = dummy[a];
  }
  for (int c : interaction_cov_) {
    const double x = state.covariates[static_cast<std::size_t>(c)];
    for (int a = 0; a < num_dummies; ++a) {
      h1[j++] = x * dummy[a];
    }
  }
}

VectorXd ModelSpec::h1(const State& state, int action_label) const {
  VectorXd out(p());
  h1_into(state, action_label, out);
  return out;
}

Features build_features(const State& state, const Action& action, const ModelSpec& spec) {
  if (action.dummy.size() != spec.actions().num_actions() - 1) {
    throw ConfigError("action dummy vector does not match the action space");
  }
  Features f;
  f.h1 = spec.h1(state, action.label);
  f.h2.resize(spec.q());
  for (Index k = 0; k < spec.q(); ++k) {
    f.h2[k] = f.h1[spec.h2_index()[static_cast<std::size_t>(k)]];
  }
  return f;
}

double linear_predictor(const Parameters& params, Index user, const VectorXd& h1,
                        const VectorXd& h2) {
  if (h1.size() != params.beta.size() || h2.size() != params.alpha.cols()) {
    throw ConfigError("feature dimensions do not match parameters");
  }
  if (user < 0 || user >= params.alpha.rows()) {
    throw ConfigError("user index out of range");
  }
  return h1.dot(params.beta) + h2.dot(params.alpha.row(user).transpose());
}

double expit(double eta) {
  if (eta >= 0.0) {
    return 1.0 / (1.0 + std::exp(-eta));
  }
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

double log1p_exp(double eta) {
  return eta > 0.0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
}

double inverse_link(Family family, double eta) {
  return family == Family::Gaussian ? eta : expit(eta);
}

Design::Design(Family family, std::vector<UserBlock> users)
    : family_(family), users_(std::move(users)) {
  if (users_.empty()) {
    throw ConfigError("design has no users");
  }
  p_ = users_.front().h1.cols();
  q_ = users_.front().h2.cols();
  for (const auto& u : users_) {
    if (u.h1.cols() != p_ || u.h2.cols() != q_ || u.h1.rows() != u.y.size() ||
        u.h2.rows() != u.y.size()) {
      throw ConfigError("inconsistent design block dimensions");
    }
    if (u.y.size() == 0) {
      throw ConfigError("design user without observations");
    }
    total_ += u.y.size();
  }
}

Design Design::build(std::span<const Trajectory> users, const ModelSpec& spec) {
  std::vector<UserBlock> blocks;
  blocks.reserve(users.size());
  for (const auto& traj : users) {
    const Index m = static_cast<Index>(traj.steps.size());
    UserBlock b;
    b.h1.resize(m, spec.p());
    b.h2.resize(m, spec.q());
    b.y.resize(m);
    VectorXd row(spec.p());
    for (Index t = 0; t < m; ++t) {
      const auto& step = traj.steps[static_cast<std::size_t>(t)];
      spec.h1_into(step.state, step.action, row);
      b.h1.row(t) = row.transpose();
      for (Index k = 0; k < spec.q(); ++k) {
        b.h2(t, k) = row[spec.h2_index()[static_cast<std::size_t>(k)]];
      }
      b.y[t] = step.outcome;
    }
    blocks.push_back(std::move(b));
  }
  return Design(spec.family(), std::move(blocks));
}

MatrixXd Design::stacked_h1() const {
  MatrixXd x(total_, p_);
  Index r = 0;
  for (const auto& u : users_) {
    x.middleRows(r, u.h1.rows()) = u.h1;
    r += u.h1.rows();
  }
  return x;
}

VectorXd Design::stacked_y() const {
  VectorXd y(total_);
  Index r = 0;
  for (const auto& u : users_) {
    y.segment(r, u.y.size()) = u.y;
    r += u.y.size();
  }
  return y;
}

}  // namespace pplearn
