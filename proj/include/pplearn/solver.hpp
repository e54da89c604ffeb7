#pragma once

#include "pplearn/objective.hpp"
#include "pplearn/tron.hpp"

#include <vector>

namespace pplearn {

struct SolverConfig {
  TronConfig tron;
  int max_outer = 50;
  double outer_tol = 1e-7;     // relative objective change between outer cycles
  double damping = 1e-8;       // smoothing of group norms inside TRON
  double polish_grad_tol = 1e-9;
  int lambda_grid = 20;
  double lambda_min_ratio = 1e-3;
  bool conditional_variance = true;  // add mean conditional variance of alpha to D
  bool accelerate = true;            // extrapolate the hyperparameter refreshes

  void validate() const;
};

struct LambdaPathEntry {
  double lambda = 0.0;
  double aic = 0.0;
  int active_groups = 0;
  bool converged = false;
};

struct FitResult {
  Parameters params;
  PenaltyConfig pen;
  std::vector<int> active_groups;
  std::vector<double> objective_path;  // penalized objective after each outer cycle
  std::vector<double> ascent_path;     // accepted TRON iterates of the final solve
  std::vector<LambdaPathEntry> lambda_path;
  ObjectiveValue objective;
  double aic = 0.0;
  bool converged = false;
  int iterations = 0;       // outer cycles
  int tron_iterations = 0;  // summed over all TRON calls
  double grad_norm = 0.0;   // final TRON gradient norm over free coordinates
};

/// Starting point for a fit: parameters, penalty hyperparameters and active set.
struct FitInit {
  Parameters params;
  PenaltyConfig pen;
  std::vector<bool> active;
};

/// beta from the pooled GLM, alpha = 0, D = I, w = 1; phi = pooled residual variance
/// for Gaussian outcomes.
FitInit default_init(const Design& design);

struct TronMaximizeResult {
  Parameters params;
  bool converged = false;
  int iterations = 0;
  double grad_norm = 0.0;
  std::vector<double> accepted_values;  // damped objective, maximization sign
};

/// Maximizes the penalized objective over beta and the alpha columns in free_groups;
/// all other columns are held at zero. Group norms of free columns are damped.
TronMaximizeResult tron_maximize(const Design& design, const PenaltyConfig& pen,
                                 const Parameters& init, const TronConfig& cfg,
                                 const std::vector<int>& free_groups, double damping = 1e-8);

/// Norm of the smooth-part gradient with respect to alpha column l.
double group_gradient_norm(const Design& design, const Parameters& params,
                           const PenaltyConfig& pen, Index l);

/// True when column l (currently zero) violates the zero-subgradient condition,
/// i.e. ||grad_l|| > lambda * w_l.
bool kkt_screen(const Design& design, const Parameters& params_with_group_zeroed,
                const PenaltyConfig& pen, Index l);

struct Hyperparams {
  VectorXd d_inv;
  VectorXd weights;
  double phi = 1.0;
};

/// Per-column mean over users of the conditional variance of alpha_i given the data,
/// read off the inverse of each user's penalized information block (active columns only).
VectorXd conditional_variance(const Design& design, const Parameters& params,
                              const PenaltyConfig& pen, const std::vector<bool>& active);

/// Refresh of the ridge matrix, group weights and dispersion from the current fit.
/// moment_correction, when given, is added to the column second moments before D is formed.
Hyperparams update_hyperparams(const MatrixXd& alpha_hat, const VectorXd& residuals,
                               Family family, const std::vector<bool>& active,
                               const VectorXd& moment_correction = VectorXd());

/// Screen/optimize/prune at fixed hyperparameters until the active set settles.
FitResult fit_fixed_penalty(const Design& design, const PenaltyConfig& pen, const FitInit& init,
                            const SolverConfig& cfg);

FitResult fit_at_lambda(const Design& design, double lambda, const FitInit& init,
                        const SolverConfig& cfg);

double aic(const Design& design, const FitResult& fit);

/// Fits a warm-started path of lambda values and returns the AIC-minimizing fit.
FitResult select_lambda(const Design& design, const SolverConfig& cfg);

FitInit warm_start(const FitResult& fit);

/// argmax over actions of h1'beta + h2'alpha_i; ties go to the smallest label.
int extract_policy(const ModelSpec& spec, const VectorXd& beta, const VectorXd& alpha_row,
                   const State& state);
int extract_policy(const FitResult& fit, const ModelSpec& spec, Index user, const State& state);

}  // namespace pplearn
