#include "pplearn/objective.hpp"

#include "pplearn/errors.hpp"

#include <cmath>
#include <numbers>

namespace pplearn {

namespace {

constexpr double kMinBernoulliWeight = 1e-10;

void check_params(const Design& design, const Parameters& params) {
  if (params.beta.size() != design.p() || params.alpha.rows() != design.n() ||
      params.alpha.cols() != design.q()) {
    throw ConfigError("parameter dimensions do not match the design");
  }
  if (design.family() == Family::Gaussian && !(params.phi > 0.0)) {
    throw ConfigError("Gaussian dispersion must be positive");
  }
}

VectorXd user_eta(const UserBlock& u, const Parameters& params, Index i) {
  VectorXd eta = u.h1 * params.beta;
  if (u.h2.cols() > 0) {
    eta.noalias() += u.h2 * params.alpha.row(i).transpose();
  }
  return eta;
}

}  // namespace

PenaltyConfig PenaltyConfig::identity(Index q, double lambda) {
  return PenaltyConfig{VectorXd::Ones(q), lambda, VectorXd::Ones(q)};
}

void PenaltyConfig::validate(Index q) const {
  if (d_inv.size() != q || weights.size() != q) {
    throw ConfigError("penalty dimensions do not match the number of random effects");
  }
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw ConfigError("lambda must be finite and nonnegative");
  }
  for (Index l = 0; l < q; ++l) {
    if (!(d_inv[l] >= 0.0) || !std::isfinite(d_inv[l])) {
      throw ConfigError("ridge matrix inverse must be finite and positive semi-definite");
    }
    if (!(weights[l] >= 0.0) || !std::isfinite(weights[l])) {
      throw ConfigError("group weights must be finite and nonnegative");
    }
  }
}

double pseudo_loglik(const Design& design, const Parameters& params) {
  check_params(design, params);
  double total = 0.0;
  if (design.family() == Family::Gaussian) {
    const double norm = 0.5 * std::log(2.0 * std::numbers::pi * params.phi);
    for (Index i = 0; i < design.n(); ++i) {
      const auto& u = design.user(i);
      const VectorXd r = u.y - user_eta(u, params, i);
      total += -r.squaredNorm() / (2.0 * params.phi) - norm * static_cast<double>(r.size());
    }
  } else {
    for (Index i = 0; i < design.n(); ++i) {
      const auto& u = design.user(i);
      const VectorXd eta = user_eta(u, params, i);
      for (Index t = 0; t < eta.size(); ++t) {
        total += u.y[t] * eta[t] - log1p_exp(eta[t]);
      }
    }
  }
  return total;
}

Score score(const Design& design, const Parameters& params) {
  check_params(design, params);
  Score s{VectorXd::Zero(design.p()), MatrixXd::Zero(design.n(), design.q())};
  const double scale = design.family() == Family::Gaussian ? 1.0 / params.phi : 1.0;
  for (Index i = 0; i < design.n(); ++i) {
    const auto& u = design.user(i);
    VectorXd r = user_eta(u, params, i);
    if (design.family() == Family::Gaussian) {
      r = (u.y - r) * scale;
    } else {
      for (Index t = 0; t < r.size(); ++t) {
        r[t] = u.y[t] - expit(r[t]);
      }
    }
    s.beta.noalias() += u.h1.transpose() * r;
    if (design.q() > 0) {
      s.alpha.row(i).noalias() = (u.h2.transpose() * r).transpose();
    }
  }
  return s;
}

ObjectiveValue penalized_objective(const Design& design, const Parameters& params,
                                   const PenaltyConfig& pen) {
  pen.validate(design.q());
  ObjectiveValue v;
  v.pseudo_loglik = pseudo_loglik(design, params);
  for (Index l = 0; l < design.q(); ++l) {
    const auto col = params.alpha.col(l);
    v.ridge_term += 0.5 * pen.d_inv[l] * col.squaredNorm();
    v.group_lasso_term += pen.lambda * pen.weights[l] * col.norm();
  }
  v.total = v.pseudo_loglik - v.ridge_term - v.group_lasso_term;
  return v;
}

VectorXd hessian_vec(const Design& design, const Parameters& params, const PenaltyConfig& pen,
                     const VectorXd& v) {
  check_params(design, params);
  pen.validate(design.q());
  const Index p = design.p();
  const Index q = design.q();
  if (v.size() != design.dimension()) {
    throw ConfigError("Hessian-vector product: vector has wrong dimension");
  }
  VectorXd out = VectorXd::Zero(v.size());
  const auto vb = v.head(p);
  for (Index i = 0; i < design.n(); ++i) {
    const auto& u = design.user(i);
    const auto va = v.segment(p + i * q, q);
    VectorXd s = u.h1 * vb;
    if (q > 0) {
      s.noalias() += u.h2 * va;
    }
    if (design.family() == Family::Gaussian) {
      s /= params.phi;
    } else {
      const VectorXd eta = user_eta(u, params, i);
      for (Index t = 0; t < s.size(); ++t) {
        const double mu = expit(eta[t]);
        s[t] *= std::max(mu * (1.0 - mu), kMinBernoulliWeight);
      }
    }
    out.head(p).noalias() += u.h1.transpose() * s;
    if (q > 0) {
      out.segment(p + i * q, q).noalias() = u.h2.transpose() * s;
      out.segment(p + i * q, q) += pen.d_inv.cwiseProduct(va);
    }
  }
  return out;
}

VectorXd pack(const VectorXd& beta, const MatrixXd& alpha) {
  const Index p = beta.size();
  const Index n = alpha.rows();
  const Index q = alpha.cols();
  VectorXd theta(p + n * q);
  theta.head(p) = beta;
  for (Index i = 0; i < n; ++i) {
    theta.segment(p + i * q, q) = alpha.row(i).transpose();
  }
  return theta;
}

void unpack(const VectorXd& theta, Index p, Index n, Index q, VectorXd& beta, MatrixXd& alpha) {
  if (theta.size() != p + n * q) {
    throw ConfigError("parameter vector has wrong dimension");
  }
  beta = theta.head(p);
  alpha.resize(n, q);
  for (Index i = 0; i < n; ++i) {
    alpha.row(i) = theta.segment(p + i * q, q).transpose();
  }
}

VectorXd fitted_means(const Design& design, const Parameters& params) {
  check_params(design, params);
  VectorXd out(design.total_steps());
  Index r = 0;
  for (Index i = 0; i < design.n(); ++i) {
    const auto& u = design.user(i);
    const VectorXd eta = user_eta(u, params, i);
    for (Index t = 0; t < eta.size(); ++t) {
      out[r++] = inverse_link(design.family(), eta[t]);
    }
  }
  return out;
}

VectorXd residuals(const Design& design, const Parameters& params) {
  return design.stacked_y() - fitted_means(design, params);
}

}  // namespace pplearn
