#include "pplearn/penalized_problem.hpp"

#include "pplearn/errors.hpp"

#include <cmath>
#include <numbers>

namespace pplearn {

PenalizedProblem::PenalizedProblem(const Design& design, const PenaltyConfig& pen, double phi,
                                   std::vector<bool> free_columns, double damping)
    : design_(design), pen_(pen), phi_(phi), free_(std::move(free_columns)), damping_(damping) {
  pen_.validate(design_.q());
  if (static_cast<Index>(free_.size()) != design_.q()) {
    throw ConfigError("free-column mask does not match the number of random effects");
  }
  if (design_.family() == Family::Gaussian && !(phi_ > 0.0)) {
    throw ConfigError("Gaussian dispersion must be positive");
  }
  if (design_.family() == Family::Bernoulli) {
    phi_ = 1.0;
  }
  resid_.resize(static_cast<std::size_t>(design_.n()));
  weight_.resize(static_cast<std::size_t>(design_.n()));
  group_norm_ = VectorXd::Zero(design_.q());
}

double PenalizedProblem::evaluate(const VectorXd& x) {
  const Index p = design_.p();
  const Index q = design_.q();
  unpack(x, p, design_.n(), q, beta_, alpha_);
  for (Index l = 0; l < q; ++l) {
    if (!free_[static_cast<std::size_t>(l)]) {
      alpha_.col(l).setZero();
    }
  }

  double loglik = 0.0;
  const bool gaussian = design_.family() == Family::Gaussian;
  const double norm_const = gaussian ? 0.5 * std::log(2.0 * std::numbers::pi * phi_) : 0.0;
  for (Index i = 0; i < design_.n(); ++i) {
    const auto& u = design_.user(i);
    VectorXd eta = u.h1 * beta_;
    if (q > 0) {
      eta.noalias() += u.h2 * alpha_.row(i).transpose();
    }
    auto& r = resid_[static_cast<std::size_t>(i)];
    auto& w = weight_[static_cast<std::size_t>(i)];
    r.resize(eta.size());
    w.resize(eta.size());
    if (gaussian) {
      r = (u.y - eta) / phi_;
      loglik += -0.5 * phi_ * r.squaredNorm() - norm_const * static_cast<double>(eta.size());
      w.setConstant(1.0 / phi_);
    } else {
      for (Index t = 0; t < eta.size(); ++t) {
        const double mu = expit(eta[t]);
        loglik += u.y[t] * eta[t] - log1p_exp(eta[t]);
        r[t] = u.y[t] - mu;
        w[t] = std::max(mu * (1.0 - mu), 1e-10);
      }
    }
  }

  double penalty = 0.0;
  for (Index l = 0; l < q; ++l) {
    const auto col = alpha_.col(l);
    penalty += 0.5 * pen_.d_inv[l] * col.squaredNorm();
    if (free_[static_cast<std::size_t>(l)]) {
      group_norm_[l] = std::sqrt(col.squaredNorm() + damping_ * damping_);
      penalty += pen_.lambda * pen_.weights[l] * group_norm_[l];
    }
  }
  value_ = -(loglik - penalty);
  return value_;
}

void PenalizedProblem::gradient(VectorXd& g) {
  const Index p = design_.p();
  const Index q = design_.q();
  g.setZero(dimension());
  for (Index i = 0; i < design_.n(); ++i) {
    const auto& u = design_.user(i);
    const auto& r = resid_[static_cast<std::size_t>(i)];
    g.head(p).noalias() -= u.h1.transpose() * r;
    if (q > 0) {
      g.segment(p + i * q, q).noalias() = -(u.h2.transpose() * r);
    }
  }
  for (Index l = 0; l < q; ++l) {
    const bool is_free = free_[static_cast<std::size_t>(l)];
    const double shrink = is_free ? pen_.lambda * pen_.weights[l] / group_norm_[l] : 0.0;
    for (Index i = 0; i < design_.n(); ++i) {
      const Index k = p + i * q + l;
      g[k] = is_free ? g[k] + (pen_.d_inv[l] + shrink) * alpha_(i, l) : 0.0;
    }
  }
}

void PenalizedProblem::hessian_vec(const VectorXd& v, VectorXd& out) {
  const Index p = design_.p();
  const Index q = design_.q();
  const Index n = design_.n();
  out.setZero(dimension());
  const auto vb = v.head(p);
  VectorXd va(q);
  for (Index i = 0; i < n; ++i) {
    const auto& u = design_.user(i);
    for (Index l = 0; l < q; ++l) {
      va[l] = free_[static_cast<std::size_t>(l)] ? v[p + i * q + l] : 0.0;
    }
    VectorXd s = u.h1 * vb;
    if (q > 0) {
      s.noalias() += u.h2 * va;
    }
    s.array() *= weight_[static_cast<std::size_t>(i)].array();
    out.head(p).noalias() += u.h1.transpose() * s;
    if (q > 0) {
      out.segment(p + i * q, q).noalias() = u.h2.transpose() * s;
      out.segment(p + i * q, q) += pen_.d_inv.cwiseProduct(va);
    }
  }
  for (Index l = 0; l < q; ++l) {
    if (!free_[static_cast<std::size_t>(l)]) {
      for (Index i = 0; i < n; ++i) {
        out[p + i * q + l] = 0.0;
      }
      continue;
    }
    const double c = pen_.lambda * pen_.weights[l];
    if (c == 0.0) {
      continue;
    }
    // Hessian of c * sqrt(||a||^2 + d^2): c (I / N - a a' / N^3).
    const double nrm = group_norm_[l];
    double av = 0.0;
    for (Index i = 0; i < n; ++i) {
      av += alpha_(i, l) * v[p + i * q + l];
    }
    for (Index i = 0; i < n; ++i) {
      out[p + i * q + l] +=
          c * (v[p + i * q + l] / nrm - alpha_(i, l) * av / (nrm * nrm * nrm));
    }
  }
}

void PenalizedProblem::hessian_diag(VectorXd& d) {
  const Index p = design_.p();
  const Index q = design_.q();
  d.setZero(dimension());
  for (Index i = 0; i < design_.n(); ++i) {
    const auto& u = design_.user(i);
    const auto& w = weight_[static_cast<std::size_t>(i)];
    d.head(p).noalias() += u.h1.cwiseAbs2().transpose() * w;
    if (q > 0) {
      d.segment(p + i * q, q).noalias() = u.h2.cwiseAbs2().transpose() * w;
    }
  }
  for (Index l = 0; l < q; ++l) {
    const bool is_free = free_[static_cast<std::size_t>(l)];
    const double c = pen_.lambda * pen_.weights[l];
    const double nrm = group_norm_[l];
    for (Index i = 0; i < design_.n(); ++i) {
      const Index k = p + i * q + l;
      if (!is_free) {
        d[k] = 1.0;
        continue;
      }
      d[k] += pen_.d_inv[l];
      if (c > 0.0) {
        d[k] += c * (1.0 / nrm - alpha_(i, l) * alpha_(i, l) / (nrm * nrm * nrm));
      }
    }
  }
}

}  // namespace pplearn
