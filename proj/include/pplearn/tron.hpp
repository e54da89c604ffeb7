#pragma once

#include <Eigen/Dense>

#include <vector>

namespace pplearn {

/// Trust-region Newton settings. Ratios compare actual to predicted decrease.
struct TronConfig {
  double delta0 = 1.0;
  double accept_eta = 0.25;
  double expand_eta = 0.75;
  double shrink_factor = 0.25;
  double expand_factor = 2.5;
  double cg_tol = 0.1;  // CG stops once ||r|| <= cg_tol * ||g||
  int cg_max_iter = 250;
  double grad_tol = 1e-6;  // relative to max(1, ||g0||)
  int max_iter = 200;
  bool precondition = true;  // diagonal scaling of the trust region

  void validate() const;
};

/// Smooth convex objective to be minimized. evaluate() caches whatever the
/// gradient and curvature queries need at the evaluated point.
class TronProblem {
 public:
  virtual ~TronProblem() = default;
  virtual Eigen::Index dimension() const = 0;
  virtual double evaluate(const Eigen::VectorXd& x) = 0;
  virtual void gradient(Eigen::VectorXd& g) = 0;
  virtual void hessian_vec(const Eigen::VectorXd& v, Eigen::VectorXd& out) = 0;
  virtual void hessian_diag(Eigen::VectorXd& d) = 0;
};

struct TronOutcome {
  Eigen::VectorXd x;
  double value = 0.0;
  double grad_norm = 0.0;
  double initial_grad_norm = 0.0;
  int iterations = 0;
  int cg_iterations = 0;
  bool converged = false;
  std::vector<double> accepted_values;  // objective after each accepted step, starting at x0
};

/// Lin-More trust-region Newton: each iteration solves the quadratic model inside
/// the trust region with Steihaug's truncated conjugate gradients.
/// Throws NumericError when the objective or gradient at an accepted point is not finite.
TronOutcome tron_minimize(TronProblem& problem, Eigen::VectorXd x0, const TronConfig& cfg);

}  // namespace pplearn
