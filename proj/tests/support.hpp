#pragma once

#include "pplearn/model.hpp"
#include "pplearn/objective.hpp"
#include "pplearn/rng.hpp"

#include <vector>

namespace pplearn::testing {

/// Random design with n users of m steps, p fixed and q random columns
/// (h2 is the first q columns of h1, which starts with an intercept).
inline Design random_design(Family family, Index n, Index m, Index p, Index q, Rng& rng,
                            const VectorXd* beta = nullptr, const MatrixXd* alpha = nullptr) {
  std::vector<UserBlock> users;
  for (Index i = 0; i < n; ++i) {
    UserBlock u;
    u.h1.resize(m, p);
    for (Index t = 0; t < m; ++t) {
      u.h1(t, 0) = 1.0;
      for (Index j = 1; j < p; ++j) {
        u.h1(t, j) = rng.normal();
      }
    }
    u.h2 = u.h1.leftCols(q);
    u.y.resize(m);
    for (Index t = 0; t < m; ++t) {
      double eta = 0.0;
      if (beta != nullptr) {
        eta = u.h1.row(t).dot(*beta);
      }
      if (alpha != nullptr && q > 0) {
        eta += u.h2.row(t).dot(alpha->row(i));
      }
      if (family == Family::Gaussian) {
        u.y[t] = eta + rng.normal();
      } else {
        u.y[t] = rng.bernoulli(expit(eta)) ? 1.0 : 0.0;
      }
    }
    users.push_back(std::move(u));
  }
  return Design(family, std::move(users));
}

inline Parameters random_params(Index n, Index p, Index q, Rng& rng, double scale = 0.5) {
  Parameters params;
  params.beta.resize(p);
  for (Index j = 0; j < p; ++j) {
    params.beta[j] = scale * rng.normal();
  }
  params.alpha.resize(n, q);
  for (Index i = 0; i < n; ++i) {
    for (Index l = 0; l < q; ++l) {
      params.alpha(i, l) = scale * rng.normal();
    }
  }
  params.phi = 0.5 + rng.uniform();
  return params;
}

inline PenaltyConfig random_penalty(Index q, Rng& rng, double lambda) {
  PenaltyConfig pen;
  pen.d_inv.resize(q);
  pen.weights.resize(q);
  for (Index l = 0; l < q; ++l) {
    pen.d_inv[l] = 0.2 + rng.uniform();
    pen.weights[l] = 0.5 + rng.uniform();
  }
  pen.lambda = lambda;
  return pen;
}

/// Dense (p + n q) Hessian of the penalized objective without the group lasso term,
/// built row by row from the stacked features [h1, e_i (x) h2].
inline MatrixXd dense_hessian(const Design& d, const Parameters& params,
                              const PenaltyConfig& pen) {
  const Index p = d.p();
  const Index q = d.q();
  const Index dim = d.dimension();
  MatrixXd h = MatrixXd::Zero(dim, dim);
  for (Index i = 0; i < d.n(); ++i) {
    const auto& u = d.user(i);
    for (Index t = 0; t < u.y.size(); ++t) {
      VectorXd x = VectorXd::Zero(dim);
      x.head(p) = u.h1.row(t).transpose();
      x.segment(p + i * q, q) = u.h2.row(t).transpose();
      const double eta = u.h1.row(t).dot(params.beta) + u.h2.row(t).dot(params.alpha.row(i));
      double w = 1.0 / params.phi;
      if (d.family() == Family::Bernoulli) {
        const double mu = expit(eta);
        w = mu * (1.0 - mu);
      }
      h -= w * x * x.transpose();
    }
    for (Index l = 0; l < q; ++l) {
      h(p + i * q + l, p + i * q + l) -= pen.d_inv[l];
    }
  }
  return h;
}

}  // namespace pplearn::testing
