#include "pplearn/solver.hpp"

#include "pplearn/errors.hpp"
#include "pplearn/glm.hpp"
#include "pplearn/penalized_problem.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>

namespace pplearn {

namespace {

constexpr double kMomentFloor = 1e-6;
constexpr double kSdOffset = 1e-3;
constexpr double kMinPhi = 1e-10;

std::vector<bool> mask_from(const std::vector<int>& groups, Index q) {
  std::vector<bool> mask(static_cast<std::size_t>(q), false);
  for (int l : groups) {
    if (l < 0 || l >= q) {
      throw ConfigError("group index out of range");
    }
    mask[static_cast<std::size_t>(l)] = true;
  }
  return mask;
}

std::vector<int> groups_from(const std::vector<bool>& mask) {
  std::vector<int> out;
  for (std::size_t l = 0; l < mask.size(); ++l) {
    if (mask[l]) {
      out.push_back(static_cast<int>(l));
    }
  }
  return out;
}

// Curvature of the pseudo-log-likelihood along alpha(i, l) for every user.
VectorXd column_curvature(const Design& design, const Parameters& params, Index l) {
  VectorXd c(design.n());
  for (Index i = 0; i < design.n(); ++i) {
    const auto& u = design.user(i);
    VectorXd eta = u.h1 * params.beta + u.h2 * params.alpha.row(i).transpose();
    double acc = 0.0;
    for (Index t = 0; t < eta.size(); ++t) {
      double w = 1.0 / params.phi;
      if (design.family() == Family::Bernoulli) {
        const double mu = expit(eta[t]);
        w = std::max(mu * (1.0 - mu), 1e-10);
      }
      acc += w * u.h2(t, l) * u.h2(t, l);
    }
    c[i] = acc;
  }
  return c;
}

// Moves a newly activated column off zero with one diagonal proximal-Newton step,
// halving it until the exact objective improves.
void initialize_column(const Design& design, const PenaltyConfig& pen, Parameters& params,
                       const VectorXd& grad_col, Index l) {
  const double gnorm = grad_col.norm();
  const double thresh = pen.lambda * pen.weights[l];
  if (!(gnorm > thresh)) {
    return;
  }
  const VectorXd curv = column_curvature(design, params, l);
  VectorXd step(design.n());
  for (Index i = 0; i < design.n(); ++i) {
    step[i] = grad_col[i] * (1.0 - thresh / gnorm) / (curv[i] + pen.d_inv[l] + 1e-12);
  }
  const double base = penalized_objective(design, params, pen).total;
  Parameters trial = params;
  for (int k = 0; k < 20; ++k) {
    trial.alpha.col(l) = step;
    if (penalized_objective(design, trial, pen).total > base) {
      params.alpha.col(l) = step;
      return;
    }
    step *= 0.5;
  }
}

// Squared extrapolation (SQUAREM) of three successive hyperparameter refreshes, in
// coordinates scaled by the latest values. Each coordinate may move at most a factor
// kMaxJump away from h2; D keeps its floor and the weights their normalization.
std::optional<Hyperparams> squarem_step(const Hyperparams& h0, const Hyperparams& h1,
                                        const Hyperparams& h2, Index q, double& step_max) {
  constexpr double kMaxJump = 100.0;
  const Index dim = 2 * q + 1;
  auto flat = [&](const Hyperparams& h) {
    VectorXd x(dim);
    x << h.d_inv, h.weights, h.phi;
    return x;
  };
  const VectorXd x0 = flat(h0);
  const VectorXd x1 = flat(h1);
  const VectorXd x2 = flat(h2);
  const VectorXd scale = x2.cwiseAbs().array() + 1e-12;
  const VectorXd r = (x1 - x0).cwiseQuotient(scale);
  const VectorXd v = (x2 - 2.0 * x1 + x0).cwiseQuotient(scale);
  const double rn = r.norm();
  const double vn = v.norm();
  if (!(rn > 0.0) || !std::isfinite(rn) || !std::isfinite(vn)) {
    return std::nullopt;
  }
  double alpha = vn > 0.0 ? -rn / vn : -step_max;
  alpha = std::min(alpha, -1.0);
  if (alpha <= -step_max) {
    alpha = -step_max;
    step_max *= 4.0;
  }
  VectorXd x = x0 + (-2.0 * alpha * r + alpha * alpha * v).cwiseProduct(scale);
  for (Index j = 0; j < dim; ++j) {
    const double ref = x2[j];
    if (ref == 0.0) {
      x[j] = 0.0;
    } else {
      x[j] = std::clamp(x[j], ref / kMaxJump, ref * kMaxJump);
    }
  }
  Hyperparams out;
  out.d_inv = x.head(q).cwiseMin(1.0 / kMomentFloor);
  out.weights = x.segment(q, q);
  if (q > 0) {
    out.weights *= static_cast<double>(q) / out.weights.maxCoeff();
  }
  out.phi = std::max(x[dim - 1], kMinPhi);
  if (!out.d_inv.allFinite() || !out.weights.allFinite() || !std::isfinite(out.phi)) {
    return std::nullopt;
  }
  return out;
}

}  // namespace

void SolverConfig::validate() const {
  tron.validate();
  if (max_outer < 1 || !(outer_tol > 0.0) || !(damping > 0.0) || !(polish_grad_tol > 0.0) ||
      lambda_grid < 1 || !(lambda_min_ratio > 0.0 && lambda_min_ratio < 1.0)) {
    throw ConfigError("invalid solver configuration");
  }
}

FitInit default_init(const Design& design) {
  const MatrixXd x = design.stacked_h1();
  const VectorXd y = design.stacked_y();
  GlmOptions opts;
  opts.max_iter = 100;
  opts.aliasing = Aliasing::MinimumNorm;
  const GlmFit glm = fit_glm(design.family(), x, y, opts);
  if (!glm.coef.allFinite()) {
    throw NumericError("pooled GLM initialization produced non-finite coefficients");
  }
  FitInit init;
  init.params.beta = glm.coef;
  init.params.alpha = MatrixXd::Zero(design.n(), design.q());
  init.params.phi = 1.0;
  if (design.family() == Family::Gaussian) {
    const double rss = (y - x * glm.coef).squaredNorm();
    init.params.phi = std::max(rss / static_cast<double>(design.total_steps()), kMinPhi);
  }
  init.pen = PenaltyConfig::identity(design.q());
  init.active.assign(static_cast<std::size_t>(design.q()), false);
  return init;
}

TronMaximizeResult tron_maximize(const Design& design, const PenaltyConfig& pen,
                                 const Parameters& init, const TronConfig& cfg,
                                 const std::vector<int>& free_groups, double damping) {
  const auto mask = mask_from(free_groups, design.q());
  Parameters start = init;
  if (start.beta.size() != design.p() || start.alpha.rows() != design.n() ||
      start.alpha.cols() != design.q()) {
    throw ConfigError("initial parameters do not match the design");
  }
  for (Index l = 0; l < design.q(); ++l) {
    if (!mask[static_cast<std::size_t>(l)]) {
      start.alpha.col(l).setZero();
    }
  }
  PenalizedProblem problem(design, pen, start.phi, mask, damping);
  TronOutcome t = tron_minimize(problem, pack(start.beta, start.alpha), cfg);

  TronMaximizeResult out;
  out.params.phi = start.phi;
  unpack(t.x, design.p(), design.n(), design.q(), out.params.beta, out.params.alpha);
  out.converged = t.converged;
  out.iterations = t.iterations;
  out.grad_norm = t.grad_norm;
  out.accepted_values.reserve(t.accepted_values.size());
  for (double v : t.accepted_values) {
    out.accepted_values.push_back(-v);
  }
  return out;
}

double group_gradient_norm(const Design& design, const Parameters& params,
                           const PenaltyConfig& pen, Index l) {
  const Score s = score(design, params);
  return (s.alpha.col(l) - pen.d_inv[l] * params.alpha.col(l)).norm();
}

bool kkt_screen(const Design& design, const Parameters& params_with_group_zeroed,
                const PenaltyConfig& pen, Index l) {
  if (l < 0 || l >= design.q()) {
    throw ConfigError("group index out of range");
  }
  if (params_with_group_zeroed.alpha.col(l).cwiseAbs().maxCoeff() != 0.0) {
    throw ConfigError("kkt_screen expects the screened column to be zero");
  }
  return group_gradient_norm(design, params_with_group_zeroed, pen, l) >
         pen.lambda * pen.weights[l];
}

VectorXd conditional_variance(const Design& design, const Parameters& params,
                              const PenaltyConfig& pen, const std::vector<bool>& active) {
  const Index q = design.q();
  const std::vector<int> cols = groups_from(active);
  const Index k = static_cast<Index>(cols.size());
  VectorXd out = VectorXd::Zero(q);
  if (k == 0 || design.n() == 0) {
    return out;
  }
  MatrixXd block(k, k);
  for (Index i = 0; i < design.n(); ++i) {
    const auto& u = design.user(i);
    const VectorXd eta = u.h1 * params.beta + u.h2 * params.alpha.row(i).transpose();
    block.setZero();
    for (Index t = 0; t < eta.size(); ++t) {
      double w = 1.0 / params.phi;
      if (design.family() == Family::Bernoulli) {
        const double mu = expit(eta[t]);
        w = std::max(mu * (1.0 - mu), 1e-10);
      }
      for (Index a = 0; a < k; ++a) {
        const double ha = u.h2(t, cols[static_cast<std::size_t>(a)]);
        for (Index b = 0; b <= a; ++b) {
          block(a, b) += w * ha * u.h2(t, cols[static_cast<std::size_t>(b)]);
        }
      }
    }
    for (Index a = 0; a < k; ++a) {
      block(a, a) += pen.d_inv[cols[static_cast<std::size_t>(a)]];
    }
    const Eigen::LDLT<MatrixXd> ldlt(block.selfadjointView<Eigen::Lower>());
    const MatrixXd inv = ldlt.solve(MatrixXd::Identity(k, k));
    for (Index a = 0; a < k; ++a) {
      const double v = inv(a, a);
      if (std::isfinite(v) && v > 0.0) {
        out[cols[static_cast<std::size_t>(a)]] += v;
      }
    }
  }
  return out / static_cast<double>(design.n());
}

Hyperparams update_hyperparams(const MatrixXd& alpha_hat, const VectorXd& resid, Family family,
                               const std::vector<bool>& active, const VectorXd& moment_correction) {
  const Index n = alpha_hat.rows();
  const Index q = alpha_hat.cols();
  if (n < 2) {
    throw ConfigError("hyperparameter refresh needs at least two users");
  }
  if (static_cast<Index>(active.size()) != q) {
    throw ConfigError("active mask does not match the number of random effects");
  }
  Hyperparams hp;
  hp.d_inv.resize(q);
  hp.weights.resize(q);
  for (Index l = 0; l < q; ++l) {
    const auto col = alpha_hat.col(l);
    double moment = col.squaredNorm() / static_cast<double>(n);
    if (moment_correction.size() == q) {
      moment += moment_correction[l];
    }
    const double mean = col.mean();
    const double var = (col.array() - mean).square().sum() / static_cast<double>(n - 1);
    const bool below_floor = moment < kMomentFloor;
    hp.d_inv[l] = (below_floor && !active[static_cast<std::size_t>(l)])
                      ? 0.0
                      : 1.0 / std::max(moment, kMomentFloor);
    hp.weights[l] = 1.0 / (std::sqrt(var) + kSdOffset);
  }
  if (q > 0) {
    hp.weights *= static_cast<double>(q) / hp.weights.maxCoeff();
  }
  hp.phi = 1.0;
  if (family == Family::Gaussian) {
    hp.phi = std::max(resid.squaredNorm() / static_cast<double>(resid.size()), kMinPhi);
  }
  return hp;
}

FitResult fit_fixed_penalty(const Design& design, const PenaltyConfig& pen, const FitInit& init,
                            const SolverConfig& cfg) {
  cfg.validate();
  pen.validate(design.q());
  const Index q = design.q();
  Parameters params = init.params;
  std::vector<bool> active = init.active;
  if (active.empty()) {
    active.assign(static_cast<std::size_t>(q), false);
  }
  if (static_cast<Index>(active.size()) != q) {
    throw ConfigError("active mask does not match the number of random effects");
  }
  for (Index l = 0; l < q; ++l) {
    if (!active[static_cast<std::size_t>(l)]) {
      params.alpha.col(l).setZero();
    }
  }

  FitResult result;
  const int max_rounds = 2 * static_cast<int>(q) + 10;
  bool settled = false;
  TronMaximizeResult last;
  for (int round = 0; round < max_rounds; ++round) {
    bool changed = false;

    const Score s = score(design, params);
    for (Index l = 0; l < q; ++l) {
      if (active[static_cast<std::size_t>(l)]) {
        continue;
      }
      const VectorXd g = s.alpha.col(l);
      if (g.norm() > pen.lambda * pen.weights[l]) {
        active[static_cast<std::size_t>(l)] = true;
        changed = true;
        initialize_column(design, pen, params, g, l);
      }
    }

    last = tron_maximize(design, pen, params, cfg.tron, groups_from(active), cfg.damping);
    params = last.params;
    result.tron_iterations += last.iterations;

    double current = penalized_objective(design, params, pen).total;
    for (Index l = 0; l < q; ++l) {
      if (!active[static_cast<std::size_t>(l)] || pen.lambda * pen.weights[l] == 0.0) {
        continue;
      }
      Parameters trial = params;
      trial.alpha.col(l).setZero();
      if (kkt_screen(design, trial, pen, l)) {
        continue;
      }
      const double value = penalized_objective(design, trial, pen).total;
      if (value >= current - 1e-12 * std::abs(current)) {
        params = std::move(trial);
        current = value;
        active[static_cast<std::size_t>(l)] = false;
        changed = true;
      }
    }

    if (!changed) {
      settled = true;
      break;
    }
  }

  result.params = params;
  result.pen = pen;
  result.active_groups = groups_from(active);
  result.ascent_path = last.accepted_values;
  result.objective = penalized_objective(design, params, pen);
  result.objective_path.push_back(result.objective.total);
  result.converged = settled && last.converged;
  result.iterations = 1;
  result.grad_norm = last.grad_norm;
  return result;
}

FitResult fit_at_lambda(const Design& design, double lambda, const FitInit& init,
                        const SolverConfig& cfg) {
  cfg.validate();
  if (!(lambda >= 0.0)) {
    throw ConfigError("lambda must be nonnegative");
  }
  const Index q = design.q();
  FitInit cur = init;
  cur.pen.lambda = lambda;
  if (cur.active.empty()) {
    cur.active.assign(static_cast<std::size_t>(q), false);
  }

  std::vector<double> path;
  FitResult last;
  bool outer_converged = false;
  int tron_iterations = 0;
  int cycles = 0;
  std::vector<int> prev_active;

  // One outer cycle: fit at the given hyperparameters, then refresh them from the fit.
  // Only a fit whose hyperparameters were refreshed from the previous fit (plain) may
  // certify convergence.
  auto cycle = [&](const Hyperparams* hp, bool plain) {
    if (hp != nullptr) {
      cur.pen.d_inv = hp->d_inv;
      cur.pen.weights = hp->weights;
      cur.params.phi = hp->phi;
    }
    last = fit_fixed_penalty(design, cur.pen, cur, cfg);
    tron_iterations += last.tron_iterations;
    ++cycles;
    cur.params = last.params;
    cur.active = mask_from(last.active_groups, q);
    const double obj = last.objective.total;
    if (plain && !path.empty() && last.active_groups == prev_active &&
        std::abs(obj - path.back()) <= cfg.outer_tol * std::abs(obj)) {
      outer_converged = true;
    }
    path.push_back(obj);
    prev_active = last.active_groups;
    const VectorXd correction = cfg.conditional_variance
                                    ? conditional_variance(design, last.params, cur.pen, cur.active)
                                    : VectorXd();
    return update_hyperparams(last.params.alpha, residuals(design, last.params), design.family(),
                              cur.active, correction);
  };
  auto done = [&] { return outer_converged || cycles >= cfg.max_outer; };

  Hyperparams h = cycle(nullptr, false);
  double step_max = 1.0;
  while (!done()) {
    const Hyperparams h0 = h;
    const std::vector<int> active0 = prev_active;
    const Hyperparams h1 = cycle(&h0, true);
    if (done()) {
      break;
    }
    const std::vector<int> active1 = prev_active;
    h = cycle(&h1, true);
    if (done() || !cfg.accelerate || prev_active != active0 || active1 != active0) {
      continue;
    }
    std::optional<Hyperparams> jump = squarem_step(h0, h1, h, q, step_max);
    if (jump) {
      h = cycle(&*jump, false);
    }
  }

  SolverConfig polish = cfg;
  polish.tron.grad_tol = cfg.polish_grad_tol;
  FitResult out = fit_fixed_penalty(design, cur.pen, cur, polish);
  tron_iterations += out.tron_iterations;
  const bool polished = out.converged || out.grad_norm <= cfg.tron.grad_tol;
  out.objective_path = std::move(path);
  out.converged = outer_converged && polished && out.active_groups == last.active_groups;
  out.iterations = cycles;
  out.tron_iterations = tron_iterations;
  out.aic = aic(design, out);
  return out;
}

double aic(const Design& design, const FitResult& fit) {
  const double df = static_cast<double>(design.p()) +
                    static_cast<double>(design.n()) * static_cast<double>(fit.active_groups.size());
  return -2.0 * pseudo_loglik(design, fit.params) + 2.0 * df;
}

FitInit warm_start(const FitResult& fit) {
  FitInit init;
  init.params = fit.params;
  init.pen = fit.pen;
  init.active = mask_from(fit.active_groups, fit.params.alpha.cols());
  return init;
}

FitResult select_lambda(const Design& design, const SolverConfig& cfg) {
  cfg.validate();
  FitInit init = default_init(design);

  double lambda_max = 0.0;
  if (design.q() > 0) {
    const Score s = score(design, init.params);
    for (Index l = 0; l < design.q(); ++l) {
      lambda_max = std::max(lambda_max, s.alpha.col(l).norm() / init.pen.weights[l]);
    }
  }
  std::vector<double> grid;
  if (lambda_max > 0.0) {
    const int k = cfg.lambda_grid;
    for (int j = 0; j < k; ++j) {
      const double frac = k > 1 ? static_cast<double>(j) / static_cast<double>(k - 1) : 0.0;
      grid.push_back(lambda_max * std::pow(cfg.lambda_min_ratio, frac));
    }
  }
  grid.push_back(0.0);

  std::vector<LambdaPathEntry> path;
  std::optional<FitResult> best;
  FitInit warm = init;
  for (double lambda : grid) {
    FitResult fit = fit_at_lambda(design, lambda, warm, cfg);
    path.push_back({lambda, fit.aic, static_cast<int>(fit.active_groups.size()), fit.converged});
    warm = warm_start(fit);
    if (fit.converged && (!best || fit.aic < best->aic)) {
      best = std::move(fit);
    }
  }
  if (!best) {
    std::ostringstream os;
    os << "no fit on the lambda path converged (" << path.size() << " values, lambda_max "
       << lambda_max << ")";
    throw NumericError(os.str());
  }
  best->lambda_path = std::move(path);
  return std::move(*best);
}

int extract_policy(const ModelSpec& spec, const VectorXd& beta, const VectorXd& alpha_row,
                   const State& state) {
  if (beta.size() != spec.p() || alpha_row.size() != spec.q()) {
    throw ConfigError("coefficient dimensions do not match the model");
  }
  VectorXd coef = beta;
  for (Index k = 0; k < spec.q(); ++k) {
    coef[spec.h2_index()[static_cast<std::size_t>(k)]] += alpha_row[k];
  }
  int best = 1;
  double best_eta = -std::numeric_limits<double>::infinity();
  VectorXd h1(spec.p());
  for (int a = 1; a <= spec.actions().num_actions(); ++a) {
    spec.h1_into(state, a, h1);
    const double eta = h1.dot(coef);
    if (eta > best_eta) {
      best_eta = eta;
      best = a;
    }
  }
  return best;
}

int extract_policy(const FitResult& fit, const ModelSpec& spec, Index user, const State& state) {
  if (user < 0 || user >= fit.params.alpha.rows()) {
    throw ConfigError("user index out of range");
  }
  return extract_policy(spec, fit.params.beta, fit.params.alpha.row(user).transpose(), state);
}

}  // namespace pplearn
