#include "pplearn/glm.hpp"

#include "pplearn/errors.hpp"

#include <cmath>
#include <limits>

namespace pplearn {

namespace {

double bernoulli_deviance(const VectorXd& y, const VectorXd& eta) {
  double dev = 0.0;
  for (Index t = 0; t < y.size(); ++t) {
    dev += 2.0 * (log1p_exp(eta[t]) - y[t] * eta[t]);
  }
  return dev;
}

bool finite(const VectorXd& v) { return v.allFinite(); }

// Weighted least squares step. Aliased coordinates are reported through `aliased`
// and set to zero in the returned solution.
VectorXd solve_ls(const MatrixXd& a, const VectorXd& b, const GlmOptions& opts, Index& rank,
                  std::vector<bool>& aliased) {
  aliased.assign(static_cast<std::size_t>(a.cols()), false);
  if (opts.aliasing == Aliasing::MinimumNorm) {
    const Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(a);
    rank = cod.rank();
    return cod.solve(b);
  }
  Eigen::ColPivHouseholderQR<MatrixXd> qr(a);
  qr.setThreshold(opts.rank_tol);
  rank = qr.rank();
  VectorXd sol = qr.solve(b);
  for (Index j = rank; j < a.cols(); ++j) {
    const Index col = qr.colsPermutation().indices()[j];
    aliased[static_cast<std::size_t>(col)] = true;
    sol[col] = 0.0;
  }
  return sol;
}

void finish(GlmFit& fit, const std::vector<bool>& aliased, const GlmOptions& opts) {
  const bool deficient = fit.rank < fit.coef.size();
  fit.divergent = !fit.converged || !finite(fit.coef) || deficient ||
                  fit.coef.norm() > opts.divergence_norm;
  for (std::size_t j = 0; j < aliased.size(); ++j) {
    if (aliased[j]) {
      fit.coef[static_cast<Index>(j)] = std::numeric_limits<double>::quiet_NaN();
    }
  }
}

}  // namespace

GlmFit fit_glm(Family family, const MatrixXd& x, const VectorXd& y, const GlmOptions& opts) {
  if (x.rows() != y.size() || x.rows() == 0) {
    throw ConfigError("GLM design and response sizes disagree");
  }
  GlmFit fit;
  std::vector<bool> aliased;
  if (family == Family::Gaussian) {
    fit.coef = solve_ls(x, y, opts, fit.rank, aliased);
    fit.deviance = (y - x * fit.coef).squaredNorm();
    fit.iterations = 1;
    fit.converged = finite(fit.coef);
    finish(fit, aliased, opts);
    return fit;
  }

  // Start from the clamped responses, as in the usual binomial initialization.
  const Index m = y.size();
  VectorXd mu = (y.array() + 0.5) / 2.0;
  VectorXd eta = (mu.array() / (1.0 - mu.array())).log().matrix();
  double dev_old = bernoulli_deviance(y, eta);
  fit.coef = VectorXd::Zero(x.cols());
  MatrixXd xw(m, x.cols());
  VectorXd zw(m);
  const double eps = std::numeric_limits<double>::epsilon();

  for (int iter = 1; iter <= opts.max_iter; ++iter) {
    fit.iterations = iter;
    for (Index t = 0; t < m; ++t) {
      const double var = mu[t] * (1.0 - mu[t]);
      const double dmu = std::max(var, eps);
      const double z = eta[t] + (y[t] - mu[t]) / dmu;
      const double w = var > 0.0 ? std::sqrt(dmu * dmu / var) : std::sqrt(eps);
      xw.row(t) = w * x.row(t);
      zw[t] = w * z;
    }
    VectorXd coef = solve_ls(xw, zw, opts, fit.rank, aliased);
    if (!finite(coef)) {
      fit.converged = false;
      fit.divergent = true;
      break;
    }
    fit.coef = std::move(coef);
    eta = x * fit.coef;
    for (Index t = 0; t < m; ++t) {
      mu[t] = expit(eta[t]);
    }
    const double dev = bernoulli_deviance(y, eta);
    fit.deviance = dev;
    if (std::abs(dev - dev_old) / (std::abs(dev) + 0.1) < opts.tol) {
      fit.converged = true;
      break;
    }
    dev_old = dev;
  }
  finish(fit, aliased, opts);
  return fit;
}

}  // namespace pplearn
