#pragma once

#include "pplearn/model.hpp"

namespace pplearn {

/// Treatment of coefficients that the design cannot identify.
enum class Aliasing {
  MinimumNorm,   // complete orthogonal decomposition; minimum-norm solution
  NotEstimable,  // pivoted QR with a relative tolerance; aliased coefficients are NaN
};

struct GlmOptions {
  int max_iter = 25;
  double tol = 1e-8;               // relative deviance change
  double divergence_norm = 1e5;    // ||coef|| beyond this counts as divergent
  Aliasing aliasing = Aliasing::NotEstimable;
  double rank_tol = 1e-11;
};

struct GlmFit {
  VectorXd coef;
  double deviance = 0.0;
  int iterations = 0;
  Index rank = 0;
  bool converged = false;
  bool divergent = false;  // not converged, rank deficient, non-finite or ||coef|| too large
};

/// Unpenalized GLM by iteratively reweighted least squares. The Gaussian case is
/// a single least squares solve.
GlmFit fit_glm(Family family, const MatrixXd& x, const VectorXd& y, const GlmOptions& opts = {});

}  // namespace pplearn
