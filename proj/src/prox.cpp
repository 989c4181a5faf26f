#include "qhr/prox.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "qhr/quantile_loss.hpp"

namespace qhr {

double soft_threshold(double a, double kappa_t) {
  if (a > kappa_t) return a - kappa_t;
  if (a < -kappa_t) return a + kappa_t;
  return 0.0;
}

double quantile_threshold(double a, double tau, double scale) {
  if (a > scale * tau) return a - scale * tau;
  if (a < -scale * (1.0 - tau)) return a + scale * (1.0 - tau);
  return 0.0;
}

double quantile_huber_prox(double a, double tau, double kappa, double rho) {
  if (kappa == 0.0) return quantile_threshold(a, 1.0 - tau, 1.0 / rho);
  const double hi = (1.0 - tau) * (kappa + 1.0 / rho);
  const double lo = -tau * (kappa + 1.0 / rho);
  if (a > hi) return a - (1.0 - tau) / rho;
  if (a < lo) return a + tau / rho;
  return a * rho * kappa / (1.0 + rho * kappa);
}

namespace {

// Warm-started accelerated proximal gradient for
// min lambda ||beta||_1 + (rho/2) ||X beta - v||^2; XtX, Xtv precomputed,
// lip = rho * lambda_max(X'X). Stops when the gradient map drops below tol.
void lasso_subproblem(const Eigen::MatrixXd& XtX, const Eigen::VectorXd& Xtv,
                      double rho, double lambda, double lip, double tol,
                      int max_iters, Eigen::VectorXd& beta) {
  const Eigen::Index p = beta.size();
  Eigen::VectorXd gamma = beta;
  Eigen::VectorXd beta_prev = beta;
  Eigen::VectorXd grad(p), candidate(p);
  double t = 1.0;
  for (int it = 0; it < max_iters; ++it) {
    grad.noalias() = rho * (XtX * gamma - Xtv);
    for (Eigen::Index i = 0; i < p; ++i)
      candidate[i] = soft_threshold(gamma[i] - grad[i] / lip, lambda / lip);
    // Gradient map at gamma; small enough means candidate is near-stationary.
    const double gm = lip * (gamma - candidate).lpNorm<Eigen::Infinity>();
    beta_prev.swap(beta);
    beta = candidate;
    if (gm <= tol) return;
    const double t_next = fista_momentum(t);
    gamma = beta + ((t - 1.0) / t_next) * (beta - beta_prev);
    t = t_next;
  }
}

}  // namespace

FitResult admm_solve(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                     const QuantileSpec& spec, double lambda,
                     const AdmmConfig& config) {
  spec.validate();
  if (A.rows() != b.size())
    throw std::invalid_argument("admm_solve: A and b row counts disagree");
  if (!(lambda >= 0.0))
    throw std::invalid_argument("admm_solve: lambda must be >= 0");
  if (!(config.rho > 0.0))
    throw std::invalid_argument("admm_solve: rho must be > 0");
  if (config.alpha_mix < 0.0 || config.alpha_mix >= 1.0)
    throw std::invalid_argument("admm_solve: alpha_mix must be in [0,1)");
  const bool elastic = config.alpha_mix > 0.0;
  if (elastic && spec.tau != 0.5)
    throw std::invalid_argument(
        "admm_solve: the elastic variant is defined for tau = 0.5 only");

  const Eigen::Index n = A.rows();
  const Eigen::Index p = A.cols();
  const double rho = config.rho;
  const double alpha = config.alpha_mix;

  const Eigen::MatrixXd XtX = A.transpose() * A;
  double lip = 1.0;
  if (p > 0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(XtX,
                                                      Eigen::EigenvaluesOnly);
    lip = std::max(rho * es.eigenvalues().maxCoeff(), 1e-12);
  }

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd z = b;
  Eigen::VectorXd u = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd z_old(n), Abeta(n), v(n), a_vec(n);

  FitResult res;
  res.status = SolveStatus::max_iters;
  int grow_streak = 0;
  double prev_resid = std::numeric_limits<double>::infinity();
  for (int it = 1; it <= config.max_iters; ++it) {
    v = b - z + u;
    lasso_subproblem(XtX, A.transpose() * v, rho, lambda, lip,
                     config.inner_lasso_tol, config.inner_max_iters, beta);
    Abeta.noalias() = A * beta;
    a_vec = u + b - Abeta;
    z_old.swap(z);
    if (elastic) {
      const double shift = (1.0 - alpha) / (alpha + rho);
      const double scale = rho / (alpha + rho);
      for (Eigen::Index i = 0; i < n; ++i)
        z[i] = soft_threshold(scale * a_vec[i], shift);
    } else {
      for (Eigen::Index i = 0; i < n; ++i)
        z[i] = quantile_huber_prox(a_vec[i], spec.tau, spec.kappa, rho);
    }
    u += b - Abeta - z;

    const double r_primal = (b - Abeta - z).norm();
    const double r_dual = rho * (A.transpose() * (z - z_old)).norm();
    const double resid = std::max(r_primal, r_dual);
    res.residual_trace.push_back(resid);
    res.iterations = it;
    res.kkt_residual = resid;
    if (r_primal <= config.primal_tol && r_dual <= config.dual_tol) {
      res.status = SolveStatus::converged;
      break;
    }
    grow_streak = resid > prev_resid ? grow_streak + 1 : 0;
    prev_resid = resid;
    if (grow_streak >= 50) {
      res.status = SolveStatus::numerical_failure;
      break;
    }
  }

  res.x = beta;
  res.support = support_of(beta);
  const Eigen::VectorXd r = b - A * beta;
  if (elastic)
    res.objective = (1.0 - alpha) * r.lpNorm<1>() + 0.5 * alpha * r.squaredNorm() +
                    lambda * beta.lpNorm<1>();
  else
    res.objective = eval_loss(r, spec) + lambda * beta.lpNorm<1>();
  return res;
}

SmoothingConfig SmoothingConfig::for_check(const Eigen::MatrixXd& A,
                                           double tau, double alpha_mix,
                                           double epsilon) {
  QuantileSpec{tau, 0.0}.validate();
  if (!(epsilon > 0.0))
    throw std::invalid_argument("SmoothingConfig: epsilon must be > 0");
  if (alpha_mix < 0.0 || alpha_mix >= 1.0)
    throw std::invalid_argument("SmoothingConfig: alpha_mix must be in [0,1)");
  SmoothingConfig cfg;
  cfg.epsilon = epsilon;
  cfg.alpha_mix = alpha_mix;
  const double edge = std::max(tau, 1.0 - tau);
  cfg.cap_d = 0.5 * static_cast<double>(A.rows()) * edge * edge;
  cfg.smooth_mu = epsilon / (2.0 * (1.0 - alpha_mix) * cfg.cap_d);
  const double fro2 = A.squaredNorm();
  cfg.lipschitz =
      (1.0 - alpha_mix) * fro2 / cfg.smooth_mu + alpha_mix * fro2;
  return cfg;
}

SmoothingConfig SmoothingConfig::for_huber(const Eigen::MatrixXd& A,
                                           const QuantileSpec& spec,
                                           double alpha_mix, double epsilon) {
  spec.validate();
  if (!(spec.kappa > 0.0))
    throw std::invalid_argument("SmoothingConfig::for_huber: kappa must be > 0");
  SmoothingConfig cfg;
  cfg.epsilon = epsilon;
  cfg.alpha_mix = alpha_mix;
  const double edge = std::max(spec.tau, 1.0 - spec.tau);
  cfg.cap_d = 0.5 * static_cast<double>(A.rows()) * edge * edge;
  cfg.smooth_mu = spec.kappa;
  const double fro2 = A.squaredNorm();
  cfg.lipschitz =
      (1.0 - alpha_mix) * fro2 / cfg.smooth_mu + alpha_mix * fro2;
  return cfg;
}

Eigen::VectorXd smoothed_check_grad(const Eigen::MatrixXd& A,
                                    const Eigen::VectorXd& b,
                                    const Eigen::VectorXd& beta, double tau,
                                    const SmoothingConfig& config) {
  const double mu = config.smooth_mu;
  if (!(mu > 0.0))
    throw std::invalid_argument("smoothed_check_grad: smooth_mu must be > 0");
  Eigen::VectorXd u = (b - A * beta) / mu;
  for (Eigen::Index i = 0; i < u.size(); ++i)
    u[i] = std::min(tau, std::max(-(1.0 - tau), u[i]));
  return -(A.transpose() * u);
}

double smoothed_check_value(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                            const Eigen::VectorXd& beta, double tau,
                            double mu) {
  const Eigen::VectorXd v = b - A * beta;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double u = std::min(tau, std::max(-(1.0 - tau), v[i] / mu));
    acc += u * v[i] - 0.5 * mu * u * u;
  }
  return acc;
}

FitResult fista_solve(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                      const QuantileSpec& spec, double lambda, double epsilon,
                      const SmoothingConfig* config) {
  spec.validate();
  if (A.rows() != b.size())
    throw std::invalid_argument("fista_solve: A and b row counts disagree");
  if (!(lambda >= 0.0))
    throw std::invalid_argument("fista_solve: lambda must be >= 0");
  SmoothingConfig cfg =
      config ? *config
             : (spec.kappa > 0.0
                    ? SmoothingConfig::for_huber(A, spec, 0.0, epsilon)
                    : SmoothingConfig::for_check(A, spec.tau, 0.0, epsilon));
  const double mu = cfg.smooth_mu;
  const double L = cfg.lipschitz;
  const double alpha = cfg.alpha_mix;
  if (!(mu > 0.0) || !(L > 0.0))
    throw std::invalid_argument("fista_solve: invalid smoothing parameters");

  const Eigen::Index n = A.rows();
  const Eigen::Index p = A.cols();
  const double box_lo = -spec.tau;
  const double box_hi = 1.0 - spec.tau;

  const auto true_objective = [&](const Eigen::VectorXd& beta) {
    const Eigen::VectorXd r = b - A * beta;
    const double base = eval_loss(r, spec);
    const double quad = 0.5 * r.squaredNorm();
    return (1.0 - alpha) * base + alpha * quad + lambda * beta.lpNorm<1>();
  };

  // Fenchel dual of the smoothed problem (alpha_mix = 0):
  //   max { <u, b> - mu ||u||^2 / 2 : u in box, ||A'u||_inf <= lambda },
  // so clamping the scaled residual into the box and shrinking it onto the
  // dual-feasible set certifies the smoothed suboptimality of beta. Combined
  // with the smoothing error mu * cap_d this bounds the true suboptimality.
  const auto duality_gap = [&](const Eigen::VectorXd& beta,
                               Eigen::VectorXd& u) {
    const Eigen::VectorXd r = b - A * beta;
    double primal = lambda * beta.lpNorm<1>();
    for (Eigen::Index i = 0; i < n; ++i) {
      u[i] = std::min(box_hi, std::max(box_lo, r[i] / mu));
      primal += u[i] * r[i] - 0.5 * mu * u[i] * u[i];
    }
    const double dual_inf = (A.transpose() * u).lpNorm<Eigen::Infinity>();
    const double scale = dual_inf > lambda && dual_inf > 0.0
                             ? lambda / dual_inf
                             : 1.0;
    const double dual = scale * u.dot(b) - 0.5 * mu * scale * scale * u.squaredNorm();
    return primal - dual;
  };
  // The smoothing budget splits epsilon in half; cap_d carries the other
  // half. Certificates only exist for the pure (alpha_mix = 0) objective.
  const bool certified = alpha == 0.0;
  const double gap_target = 0.5 * cfg.epsilon;

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd beta_prev = beta;
  Eigen::VectorXd gamma = beta;
  double t = 1.0;

  Eigen::VectorXd resid(n), u(n), grad(p);
  FitResult res;
  res.status = SolveStatus::max_iters;
  double gap = std::numeric_limits<double>::infinity();
  int it = 0;
  for (it = 1; it <= cfg.max_iters; ++it) {
    resid = b - A * gamma;
    for (Eigen::Index i = 0; i < n; ++i)
      u[i] = std::min(box_hi, std::max(box_lo, resid[i] / mu));
    grad.noalias() = -(1.0 - alpha) * (A.transpose() * u);
    if (alpha > 0.0) grad.noalias() -= alpha * (A.transpose() * resid);

    beta_prev.swap(beta);
    for (Eigen::Index i = 0; i < p; ++i)
      beta[i] = soft_threshold(gamma[i] - grad[i] / L, lambda / L);

    const double t_next = fista_momentum(t);
    gamma = beta + ((t - 1.0) / t_next) * (beta - beta_prev);
    t = t_next;

    if (certified && (it % 50 == 0 || it == cfg.max_iters)) {
      gap = duality_gap(beta, u);
      res.residual_trace.push_back(gap);
      if (!std::isfinite(gap)) {
        res.status = SolveStatus::numerical_failure;
        break;
      }
      if (gap <= gap_target) {
        res.status = SolveStatus::converged;
        break;
      }
    }
  }

  res.x = beta;
  res.support = support_of(beta);
  res.objective = true_objective(beta);
  res.iterations = std::min(it, cfg.max_iters);
  if (!std::isfinite(res.objective)) res.status = SolveStatus::numerical_failure;
  if (certified) {
    res.kkt_residual = gap;
  } else {
    // No certificate for the elastic composite; report the gradient-map norm.
    resid = b - A * beta;
    for (Eigen::Index i = 0; i < n; ++i)
      u[i] = std::min(box_hi, std::max(box_lo, resid[i] / mu));
    grad.noalias() = -(1.0 - alpha) * (A.transpose() * u);
    if (alpha > 0.0) grad.noalias() -= alpha * (A.transpose() * resid);
    double gm = 0.0;
    for (Eigen::Index i = 0; i < p; ++i)
      gm = std::max(gm, std::abs(L * (beta[i] - soft_threshold(
                                                    beta[i] - grad[i] / L,
                                                    lambda / L))));
    res.kkt_residual = gm;
  }
  return res;
}

}  // namespace qhr
