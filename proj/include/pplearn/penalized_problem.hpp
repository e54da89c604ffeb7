#pragma once

#include "pplearn/objective.hpp"
#include "pplearn/tron.hpp"

#include <vector>

namespace pplearn {

/// Negated penalized pseudo-log-likelihood restricted to beta and the free
/// alpha columns, in the minimization form TRON expects. The group norm of
/// each free column is smoothed as sqrt(||a||^2 + damping^2). Coordinates of
/// frozen columns have zero gradient and zero curvature, so they stay put.
class PenalizedProblem final : public TronProblem {
 public:
  PenalizedProblem(const Design& design, const PenaltyConfig& pen, double phi,
                   std::vector<bool> free_columns, double damping);

  Index dimension() const override { return design_.dimension(); }
  double evaluate(const VectorXd& x) override;
  void gradient(VectorXd& g) override;
  void hessian_vec(const VectorXd& v, VectorXd& out) override;
  void hessian_diag(VectorXd& d) override;

  /// Objective (maximization sign) with damped group norms at the last evaluated point.
  double damped_total() const { return -value_; }

 private:
  const Design& design_;
  const PenaltyConfig& pen_;
  double phi_;
  std::vector<bool> free_;
  double damping_;

  VectorXd beta_;
  MatrixXd alpha_;
  std::vector<VectorXd> resid_;   // y - mu per user, divided by the dispersion
  std::vector<VectorXd> weight_;  // per-step curvature weights
  VectorXd group_norm_;           // damped norms of free columns
  double value_ = 0.0;
};

}  // namespace pplearn
