#pragma once

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pplearn {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Family { Gaussian, Bernoulli };

std::string_view family_name(Family family);
Family parse_family(std::string_view name);

/// Coding of a finite action space {1, ..., K}.
///
/// Label 1 is the reference level. Label k > 1 maps to the dummy vector
/// e_{k-1} - c, the reference label to -c, where c holds the centering
/// probabilities of labels 2..K.
class ActionCoding {
 public:
  explicit ActionCoding(std::vector<double> probabilities);

  static ActionCoding uniform(int num_actions);

  int num_actions() const { return static_cast<int>(probs_.size()); }
  std::span<const double> probabilities() const { return probs_; }
  VectorXd dummy(int label) const;
  void dummy_into(int label, Eigen::Ref<VectorXd> out) const;

 private:
  std::vector<double> probs_;
};

struct Action {
  int label = 1;
  VectorXd dummy;
};

Action make_action(int label, const ActionCoding& coding);

struct State {
  std::vector<double> covariates;
  int time_index = 1;
};

struct Step {
  State state;
  int action = 1;
  double outcome = 0.0;
  double propensity = 1.0;
};

struct Trajectory {
  std::string user_id;
  std::vector<Step> steps;
};

/// Throws ConfigError when steps are out of order, dimensions disagree,
/// propensities are not in (0, 1] or binary outcomes are not 0/1.
void validate_trajectories(std::span<const Trajectory> users, std::size_t num_covariates,
                           int num_actions, std::optional<Family> family);

enum class TermKind { Intercept, Covariate, ActionDummy, Interaction };

struct Term {
  TermKind kind = TermKind::Intercept;
  int covariate = -1;     // Covariate / Interaction
  int action_index = -1;  // ActionDummy / Interaction, 0-based dummy slot
  std::string name;
};

/// Outcome family plus the fixed-effect map h1 and its random-effect sub-map h2.
///
/// Term order is (intercept, covariates, action dummies, covariate x dummy
/// interactions in declared covariate-major order).
class ModelSpec {
 public:
  ModelSpec(Family family, std::vector<std::string> covariates, ActionCoding actions,
            std::vector<std::string> interactions, std::vector<std::string> h2_terms);

  Family family() const { return family_; }
  const std::vector<std::string>& covariates() const { return covariates_; }
  const std::vector<std::string>& interactions() const { return interactions_; }
  const ActionCoding& actions() const { return actions_; }
  const std::vector<Term>& terms() const { return terms_; }
  const std::vector<int>& h2_index() const { return h2_index_; }
  std::vector<std::string> h2_terms() const;
  Index p() const { return static_cast<Index>(terms_.size()); }
  Index q() const { return static_cast<Index>(h2_index_.size()); }

  /// Terms that change with the action; the coefficients a policy depends on.
  std::vector<int> policy_terms() const;
  std::optional<int> term_index(std::string_view name) const;

  void h1_into(const State& state, int action_label, Eigen::Ref<VectorXd> h1) const;
  VectorXd h1(const State& state, int action_label) const;

 private:
  Family family_;
  std::vector<std::string> covariates_;
  ActionCoding actions_;
  std::vector<std::string> interactions_;
  std::vector<int> interaction_cov_;
  std::vector<Term> terms_;
  std::vector<int> h2_index_;
};

struct Features {
  VectorXd h1;
  VectorXd h2;
};

Features build_features(const State& state, const Action& action, const ModelSpec& spec);

struct Parameters {
  VectorXd beta;
  MatrixXd alpha;  // n x q, row i holds user i's random effects
  double phi = 1.0;
};

double linear_predictor(const Parameters& params, Index user, const VectorXd& h1,
                        const VectorXd& h2);

/// Overflow-safe logistic function.
double expit(double eta);
/// log(1 + exp(eta)) without overflow.
double log1p_exp(double eta);

double inverse_link(Family family, double eta);

/// Per-user design blocks compiled from trajectories and a ModelSpec.
struct UserBlock {
  MatrixXd h1;  // m_i x p
  MatrixXd h2;  // m_i x q
  VectorXd y;
};

class Design {
 public:
  Design(Family family, std::vector<UserBlock> users);

  static Design build(std::span<const Trajectory> users, const ModelSpec& spec);

  Family family() const { return family_; }
  Index n() const { return static_cast<Index>(users_.size()); }
  Index p() const { return p_; }
  Index q() const { return q_; }
  Index total_steps() const { return total_; }
  Index dimension() const { return p_ + n() * q_; }
  const std::vector<UserBlock>& users() const { return users_; }
  const UserBlock& user(Index i) const { return users_[static_cast<std::size_t>(i)]; }

  /// All users' h1 rows stacked, and the matching outcomes.
  MatrixXd stacked_h1() const;
  VectorXd stacked_y() const;

 private:
  Family family_;
  std::vector<UserBlock> users_;
  Index p_ = 0;
  Index q_ = 0;
  Index total_ = 0;
};

}  // namespace pplearn
