#include "pplearn/tron.hpp"

#include "pplearn/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace pplearn {

using Eigen::Index;
using Eigen::VectorXd;

void TronConfig::validate() const {
  if (!(0.0 < accept_eta && accept_eta < expand_eta && expand_eta < 1.0)) {
    throw ConfigError("TRON requires 0 < accept_eta < expand_eta < 1");
  }
  if (!(delta0 > 0.0) || !(shrink_factor > 0.0 && shrink_factor < 1.0) ||
      !(expand_factor > 1.0)) {
    throw ConfigError("TRON radius settings must be positive with shrink < 1 < expand");
  }
  if (!(cg_tol > 0.0 && cg_tol < 1.0) || cg_max_iter < 1 || !(grad_tol > 0.0) || max_iter < 1) {
    throw ConfigError("TRON tolerances and iteration limits must be positive");
  }
}

namespace {

constexpr double kRoundingRegime = 1e-11;

struct CgResult {
  VectorXd step;
  VectorXd residual;
  int iterations = 0;
};

// Steihaug-Toint truncated CG on the scaled model g's + s'Hs/2 with ||s|| <= delta.
// scale holds the diagonal preconditioner square roots; H_scaled = S^-1 H S^-1.
CgResult steihaug_cg(TronProblem& problem, const VectorXd& g_scaled, const VectorXd& scale,
                     double delta, const TronConfig& cfg) {
  const Index n = g_scaled.size();
  CgResult out{VectorXd::Zero(n), -g_scaled, 0};
  VectorXd& s = out.step;
  VectorXd& r = out.residual;
  VectorXd d = r;
  VectorXd hd(n);
  VectorXd tmp(n);
  const double cg_tol = cfg.cg_tol * g_scaled.norm();
  double rtr = r.squaredNorm();

  auto boundary_step = [&](double& tau) {
    // Largest tau >= 0 with ||s + tau d|| = delta.
    const double sd = s.dot(d);
    const double dd = d.squaredNorm();
    const double ss = s.squaredNorm();
    const double rad = std::sqrt(std::max(sd * sd + dd * (delta * delta - ss), 0.0));
    tau = sd >= 0.0 ? (delta * delta - ss) / (sd + rad) : (rad - sd) / dd;
  };

  while (out.iterations < cfg.cg_max_iter) {
    if (std::sqrt(rtr) <= cg_tol) {
      break;
    }
    ++out.iterations;
    tmp = d.cwiseQuotient(scale);
    problem.hessian_vec(tmp, hd);
    hd = hd.cwiseQuotient(scale);
    const double dhd = d.dot(hd);
    if (!(dhd > 0.0)) {
      double tau = 0.0;
      boundary_step(tau);
      s += tau * d;
      r -= tau * hd;
      break;
    }
    const double alpha = rtr / dhd;
    if ((s + alpha * d).norm() > delta) {
      double tau = 0.0;
      boundary_step(tau);
      s += tau * d;
      r -= tau * hd;
      break;
    }
    s += alpha * d;
    r -= alpha * hd;
    const double rnew = r.squaredNorm();
    d = r + (rnew / rtr) * d;
    rtr = rnew;
  }
  return out;
}

[[noreturn]] void fail(const char* what, int iter, double value, double gnorm) {
  std::ostringstream os;
  os << "TRON: " << what << " (iteration " << iter << ", objective " << value
     << ", gradient norm " << gnorm << ")";
  throw NumericError(os.str());
}

}  // namespace

TronOutcome tron_minimize(TronProblem& problem, VectorXd x0, const TronConfig& cfg) {
  cfg.validate();
  const Index n = problem.dimension();
  if (x0.size() != n) {
    throw ConfigError("TRON starting point has wrong dimension");
  }

  TronOutcome out;
  out.x = std::move(x0);
  double f = problem.evaluate(out.x);
  VectorXd g(n);
  problem.gradient(g);
  double gnorm = g.norm();
  if (!std::isfinite(f) || !std::isfinite(gnorm)) {
    fail("non-finite objective or gradient at the starting point", 0, f, gnorm);
  }
  out.initial_grad_norm = gnorm;
  out.accepted_values.push_back(f);
  const double tol = cfg.grad_tol * std::max(1.0, gnorm);

  double delta = cfg.delta0;
  VectorXd scale = VectorXd::Ones(n);
  VectorXd diag(n);
  VectorXd x_new(n);
  VectorXd g_new(n);

  for (int iter = 0; iter < cfg.max_iter; ++iter) {
    if (gnorm <= tol) {
      break;
    }
    ++out.iterations;

    if (cfg.precondition) {
      problem.hessian_diag(diag);
      const double dmax = diag.maxCoeff();
      const double floor = dmax > 0.0 ? 1e-12 * dmax : 1.0;
      for (Index j = 0; j < n; ++j) {
        scale[j] = std::sqrt(diag[j] > floor ? diag[j] : (dmax > 0.0 ? floor : 1.0));
      }
    }
    const VectorXd g_scaled = g.cwiseQuotient(scale);
    CgResult cg = steihaug_cg(problem, g_scaled, scale, delta, cfg);
    out.cg_iterations += cg.iterations;

    x_new = out.x + cg.step.cwiseQuotient(scale);
    const double f_new = problem.evaluate(x_new);
    const double prered = -0.5 * (g_scaled.dot(cg.step) - cg.step.dot(cg.residual));
    const double actred = std::isfinite(f_new) ? f - f_new : -std::numeric_limits<double>::infinity();
    const double snorm = cg.step.norm();

    if (!(prered > 0.0)) {
          problem.evaluate(out.x);
      break;
    }
    double ratio = actred / prered;
    const double fscale = std::max(std::abs(f), 1.0);
    if (ratio < cfg.accept_eta && prered <= kRoundingRegime * fscale && std::isfinite(f_new)) {
      // The predicted change is below what f can resolve; judge the step by the gradient.
      problem.gradient(g_new);
      ratio = g_new.norm() < gnorm ? 1.0 : 0.0;
    }
    const bool accepted = ratio >= cfg.accept_eta;
    if (!accepted) {
      delta = cfg.shrink_factor * std::min(delta, snorm);
      problem.evaluate(out.x);
    } else {
      out.x = x_new;
      f = f_new;
      problem.gradient(g);  // cache is at x_new
      gnorm = g.norm();
      if (!std::isfinite(gnorm)) {
        fail("non-finite gradient", iter + 1, f, gnorm);
      }
      out.accepted_values.push_back(f);
      if (ratio >= cfg.expand_eta) {
        delta = std::max(delta, cfg.expand_factor * snorm);
      }
    }

    if (!accepted && std::abs(actred) <= 1e-15 * fscale && prered <= 1e-15 * fscale) {
      break;
    }
    if (delta <= 1e-15 * std::max(1.0, out.x.norm())) {
      break;
    }
  }

  out.value = f;
  out.grad_norm = gnorm;
  out.converged = gnorm <= tol;
  return out;
}

}  // namespace pplearn
