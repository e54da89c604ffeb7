#pragma once

#include "pplearn/model.hpp"

namespace pplearn {

/// Ridge and group-lasso settings of the penalized pseudo-log-likelihood.
/// The ridge matrix is diagonal; d_inv holds the diagonal of its generalized inverse.
struct PenaltyConfig {
  VectorXd d_inv;
  double lambda = 0.0;
  VectorXd weights;

  static PenaltyConfig identity(Index q, double lambda = 0.0);
  void validate(Index q) const;
};

struct ObjectiveValue {
  double pseudo_loglik = 0.0;
  double ridge_term = 0.0;
  double group_lasso_term = 0.0;
  double total = 0.0;
};

struct Score {
  VectorXd beta;
  MatrixXd alpha;
};

double pseudo_loglik(const Design& design, const Parameters& params);

/// Gradient of the summed pseudo-log-likelihood with respect to beta and each alpha row.
Score score(const Design& design, const Parameters& params);

ObjectiveValue penalized_objective(const Design& design, const Parameters& params,
                                   const PenaltyConfig& pen);

/// (-H) v where H is the Hessian of pseudo_loglik minus the ridge term, with v laid
/// out as [beta; alpha row-major]. Never forms the dense Hessian.
VectorXd hessian_vec(const Design& design, const Parameters& params, const PenaltyConfig& pen,
                     const VectorXd& v);

// Flattening of (beta, alpha) into a single coordinate vector.
VectorXd pack(const VectorXd& beta, const MatrixXd& alpha);
void unpack(const VectorXd& theta, Index p, Index n, Index q, VectorXd& beta, MatrixXd& alpha);
inline Index alpha_offset(Index p, Index q, Index user, Index col) { return p + user * q + col; }

/// Fitted means for every observation, stacked in user order.
VectorXd fitted_means(const Design& design, const Parameters& params);
VectorXd residuals(const Design& design, const Parameters& params);

}  // namespace pplearn
