#include "pplearn/evaluate.hpp"

#include "pplearn/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace pplearn {

namespace {

void check_truth(const PolicyTable& table, const GroundTruth& truth) {
  if (truth.beta0.size() != table.spec.p() || truth.alpha0.cols() != table.spec.q() ||
      truth.alpha0.rows() != table.n() || table.coef.cols() != table.spec.p()) {
    throw ConfigError("policy table and ground truth dimensions do not match");
  }
}

// Mean outcome of every action for coefficient vector coef.
VectorXd means_for(const ModelSpec& spec, Family family, const VectorXd& coef, const State& state) {
  const int k = spec.actions().num_actions();
  VectorXd out(k);
  VectorXd h1(spec.p());
  for (int a = 1; a <= k; ++a) {
    spec.h1_into(state, a, h1);
    out[a - 1] = inverse_link(family, h1.dot(coef));
  }
  return out;
}

int argmax_first(const VectorXd& v) {
  int best = 0;
  for (Index j = 1; j < v.size(); ++j) {
    if (v[j] > v[best]) {
      best = static_cast<int>(j);
    }
  }
  return best + 1;
}

// Aliased (NaN) coefficients do not enter predictions.
VectorXd usable(const MatrixXd& coef, Index user) {
  VectorXd row = coef.row(user).transpose();
  for (Index j = 0; j < row.size(); ++j) {
    if (std::isnan(row[j])) {
      row[j] = 0.0;
    }
  }
  return row;
}

MatrixXd true_coefficients(const ModelSpec& spec, const GroundTruth& truth) {
  return user_coefficients(spec, truth.beta0, truth.alpha0);
}

}  // namespace

std::string_view method_name(Method method) {
  switch (method) {
    case Method::PPL:
      return "PPL";
    case Method::GEE:
      return "GEE";
    case Method::MGLM:
      return "MGLM";
  }
  return "PPL";
}

Method parse_method(std::string_view name) {
  if (name == "ppl" || name == "PPL") {
    return Method::PPL;
  }
  if (name == "gee" || name == "GEE") {
    return Method::GEE;
  }
  if (name == "mglm" || name == "MGLM") {
    return Method::MGLM;
  }
  throw ConfigError("unknown method '" + std::string(name) + "' (expected ppl, gee or mglm)");
}

std::optional<Index> PolicyTable::find_user(std::string_view id) const {
  for (std::size_t i = 0; i < user_ids.size(); ++i) {
    if (user_ids[i] == id) {
      return static_cast<Index>(i);
    }
  }
  return std::nullopt;
}

VectorXd PolicyTable::action_means(Index user, const State& state) const {
  if (user < 0 || user >= n()) {
    throw ConfigError("user index out of range");
  }
  if (state.covariates.size() != spec.covariates().size()) {
    throw ConfigError("state has the wrong number of covariates");
  }
  return means_for(spec, spec.family(), usable(coef, user), state);
}

int PolicyTable::decide(Index user, const State& state) const {
  if (user < 0 || user >= n()) {
    throw ConfigError("user index out of range");
  }
  // Decisions use eta directly: the inverse link is monotone, and eta keeps
  // ties and order exact where expit would saturate.
  const int k = spec.actions().num_actions();
  VectorXd eta(k);
  VectorXd h1(spec.p());
  const VectorXd c = usable(coef, user);
  for (int a = 1; a <= k; ++a) {
    spec.h1_into(state, a, h1);
    eta[a - 1] = h1.dot(c);
  }
  return argmax_first(eta);
}

MatrixXd user_coefficients(const ModelSpec& spec, const VectorXd& beta, const MatrixXd& alpha) {
  if (beta.size() != spec.p() || alpha.cols() != spec.q()) {
    throw ConfigError("coefficient dimensions do not match the model");
  }
  MatrixXd out = beta.transpose().replicate(alpha.rows(), 1);
  for (Index k = 0; k < spec.q(); ++k) {
    out.col(spec.h2_index()[static_cast<std::size_t>(k)]) += alpha.col(k);
  }
  return out;
}

PolicyTable policy_table(const FitResult& fit, const ModelSpec& spec,
                         std::vector<std::string> user_ids) {
  if (static_cast<Index>(user_ids.size()) != fit.params.alpha.rows()) {
    throw ConfigError("user id count does not match the fit");
  }
  const Index n = fit.params.alpha.rows();
  return PolicyTable{Method::PPL, spec, std::move(user_ids),
                     user_coefficients(spec, fit.params.beta, fit.params.alpha),
                     std::vector<bool>(static_cast<std::size_t>(n), false)};
}

double mse_policy_params(const PolicyTable& table, const GroundTruth& truth) {
  check_truth(table, truth);
  const MatrixXd target = true_coefficients(table.spec, truth);
  const std::vector<int> terms = table.spec.policy_terms();
  if (terms.empty() || table.n() == 0) {
    throw ConfigError("MSE needs at least one user and one action-dependent term");
  }
  double total = 0.0;
  for (Index i = 0; i < table.n(); ++i) {
    for (int j : terms) {
      const double e = table.coef(i, j) - target(i, j);
      if (!std::isfinite(e)) {
        return std::numeric_limits<double>::infinity();
      }
      total += e * e;
    }
  }
  return total / (static_cast<double>(table.n()) * static_cast<double>(terms.size()));
}

std::string format_mse(double mse) {
  if (!std::isfinite(mse) || mse > kMseDisplayCap) {
    return ">1E10";
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", mse);
  return buf;
}

double value_at_state(const PolicyTable& table, const GroundTruth& truth, const State& state) {
  check_truth(table, truth);
  const MatrixXd target = true_coefficients(table.spec, truth);
  double total = 0.0;
  for (Index i = 0; i < table.n(); ++i) {
    const VectorXd q = means_for(table.spec, truth.family, target.row(i).transpose(), state);
    total += q[table.decide(i, state) - 1];
  }
  return total / static_cast<double>(table.n());
}

double optimal_value(const PolicyTable& table, const GroundTruth& truth, const State& state) {
  check_truth(table, truth);
  const MatrixXd target = true_coefficients(table.spec, truth);
  double total = 0.0;
  for (Index i = 0; i < table.n(); ++i) {
    total += means_for(table.spec, truth.family, target.row(i).transpose(), state).maxCoeff();
  }
  return total / static_cast<double>(table.n());
}

double worst_value(const PolicyTable& table, const GroundTruth& truth, const State& state) {
  check_truth(table, truth);
  const MatrixXd target = true_coefficients(table.spec, truth);
  double total = 0.0;
  for (Index i = 0; i < table.n(); ++i) {
    total += means_for(table.spec, truth.family, target.row(i).transpose(), state).minCoeff();
  }
  return total / static_cast<double>(table.n());
}

double value_ratio(const PolicyTable& table, const GroundTruth& truth, const State& state) {
  const double v = value_at_state(table, truth, state);
  const double best = optimal_value(table, truth, state);
  const double worst = worst_value(table, truth, state);
  const double span = best - worst;
  if (!(span > 0.0)) {
    return 1.0;
  }
  return std::clamp((v - worst) / span, 0.0, 1.0);
}

double iptw_response_rate(const PolicyTable& table, std::span<const Trajectory> test_data) {
  double num = 0.0;
  double den = 0.0;
  for (const auto& traj : test_data) {
    const auto user = table.find_user(traj.user_id);
    if (!user) {
      throw ConfigError("user '" + traj.user_id + "' has no policy");
    }
    for (const auto& step : traj.steps) {
      if (!(step.propensity > 0.0)) {
        throw ConfigError("IPTW needs positive propensities");
      }
      if (table.decide(*user, step.state) == step.action) {
        num += step.outcome / step.propensity;
        den += 1.0 / step.propensity;
      }
    }
  }
  if (!(den > 0.0)) {
    throw NumericError("IPTW: no overlap, no test step follows the policy");
  }
  return num / den;
}

MethodReport evaluate_policy(const PolicyTable& table, const GroundTruth* truth,
                             std::span<const State> eval_states,
                             std::span<const Trajectory> test_data) {
  MethodReport out;
  out.method = table.method;
  out.divergent_users =
      static_cast<int>(std::count(table.divergent.begin(), table.divergent.end(), true));
  if (truth != nullptr) {
    if (truth->user_ids != table.user_ids) {
      throw ConfigError("ground truth and policy table list different users");
    }
    out.mse = mse_policy_params(table, *truth);
    double total = 0.0;
    for (const auto& state : eval_states) {
      const double vr = value_ratio(table, *truth, state);
      out.vr.push_back({state, vr});
      total += vr;
    }
    if (!eval_states.empty()) {
      out.mean_vr = total / static_cast<double>(eval_states.size());
    }
  }
  std::size_t steps = 0;
  for (const auto& traj : test_data) {
    steps += traj.steps.size();
  }
  if (steps == 0) {
    out.iptw_note = "no test steps";
  } else {
    try {
      out.iptw = iptw_response_rate(table, test_data);
    } catch (const NumericError& e) {
      out.iptw_note = e.what();
    }
  }
  return out;
}

PolicyTable gee_fit(const Design& design, const ModelSpec& spec, std::vector<std::string> user_ids,
                    const GlmOptions& opts) {
  if (design.total_steps() == 0) {
    throw ConfigError("GEE needs at least one observation");
  }
  if (static_cast<Index>(user_ids.size()) != design.n()) {
    throw ConfigError("user id count does not match the design");
  }
  const GlmFit glm = fit_glm(design.family(), design.stacked_h1(), design.stacked_y(), opts);
  if (!glm.converged || !glm.coef.allFinite()) {
    std::ostringstream os;
    os << "GEE: IRLS did not converge (" << glm.iterations << " iterations, deviance "
       << glm.deviance << ")";
    throw NumericError(os.str());
  }
  const Index n = design.n();
  return PolicyTable{Method::GEE, spec, std::move(user_ids), glm.coef.transpose().replicate(n, 1),
                     std::vector<bool>(static_cast<std::size_t>(n), false)};
}

PolicyTable mglm_fit(const Design& design, const ModelSpec& spec,
                     std::vector<std::string> user_ids, const GlmOptions& opts) {
  if (static_cast<Index>(user_ids.size()) != design.n()) {
    throw ConfigError("user id count does not match the design");
  }
  const Index n = design.n();
  PolicyTable table{Method::MGLM, spec, std::move(user_ids), MatrixXd(n, design.p()),
                    std::vector<bool>(static_cast<std::size_t>(n), false)};
  for (Index i = 0; i < n; ++i) {
    const auto& u = design.user(i);
    if (u.y.size() == 0) {
      throw ConfigError("MGLM needs at least one step per user");
    }
    const GlmFit glm = fit_glm(design.family(), u.h1, u.y, opts);
    table.coef.row(i) = glm.coef.transpose();
    table.divergent[static_cast<std::size_t>(i)] = glm.divergent;
  }
  return table;
}

}  // namespace pplearn
