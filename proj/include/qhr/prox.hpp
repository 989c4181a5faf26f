#pragma once

#include <cmath>

#include <Eigen/Core>

#include "qhr/types.hpp"

namespace qhr {

// Scalar shrinkage: sign(a) * max(|a| - kappa_t, 0).
double soft_threshold(double a, double kappa_t);

// Asymmetric shrinkage with dead zone scale * [-(1-tau), tau]:
//   a - scale*tau       for a above the zone,
//   0                   inside it,
//   a + scale*(1-tau)   below it.
// At tau = 0.5 this equals soft_threshold with kappa_t = scale / 2.
double quantile_threshold(double a, double tau, double scale);

// Proximal map of the quantile-Huber loss (this library's residual
// convention) with weight 1/rho: argmin_z loss(z) + (rho/2)(z - a)^2.
// kappa = 0 reduces to the check-loss prox, i.e.
// quantile_threshold(a, 1 - tau, 1/rho).
double quantile_huber_prox(double a, double tau, double kappa, double rho);

struct AdmmConfig {
  double rho = 1.0;            // augmented Lagrangian weight
  double alpha_mix = 0.0;      // 0: pure quantile loss; >0: elastic, tau=0.5
  int max_iters = 20000;
  double primal_tol = 1e-6;    // absolute, on ||y - X beta - z||_2
  double dual_tol = 1e-6;      // absolute, on rho * ||X'(z_k - z_{k-1})||_2
  double inner_lasso_tol = 1e-8;  // gradient-map norm of the beta subproblem
  int inner_max_iters = 20000;
};

// Splitting method for min loss(b - A beta) + lambda ||beta||_1 over the
// consensus z = b - A beta. The beta step is an l1 least-squares subproblem
// solved by warm-started accelerated proximal gradient; the z step applies
// quantile_huber_prox elementwise (alpha_mix = 0) or, for the elastic
// variant at tau = 0.5, the shifted soft threshold
// S_{(1-a)/(a+rho)}(rho*(u + b - A beta)/(a+rho)).
// Divergence (primal+dual residual growing 50 iterations in a row) reports
// numerical_failure.
FitResult admm_solve(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                     const QuantileSpec& spec, double lambda,
                     const AdmmConfig& config = {});

// Parameters of the smoothed check loss
//   C_mu(beta) = max { <u, b - A beta> - mu ||u||^2 / 2 : u in box },
// which is exactly the quantile-Huber loss with kappa = mu. cap_d is the
// box's diameter term D = max ||u||^2 / 2, and lipschitz bounds the gradient
// of the smoothed composite (Frobenius-norm bound ||A||_F^2 / mu for the
// smoothed part plus alpha_mix * ||A||_F^2 for an elastic quadratic).
struct SmoothingConfig {
  double epsilon = 1e-5;
  double alpha_mix = 0.0;
  double cap_d = 0.0;
  double smooth_mu = 0.0;
  double lipschitz = 0.0;
  int max_iters = 2000000;

  // Accuracy-driven smoothing: smooth_mu = epsilon / (2 (1-alpha_mix) cap_d),
  // so optimizing the smoothed objective to epsilon/2 puts the true objective
  // within epsilon.
  static SmoothingConfig for_check(const Eigen::MatrixXd& A, double tau,
                                   double alpha_mix, double epsilon);
  // Exact representation of a quantile-Huber objective: smooth_mu = kappa.
  static SmoothingConfig for_huber(const Eigen::MatrixXd& A,
                                   const QuantileSpec& spec, double alpha_mix,
                                   double epsilon);
};

// Momentum update t_{k+1} = (1 + sqrt(1 + 4 t_k^2)) / 2 shared by the
// accelerated solvers.
inline double fista_momentum(double t) {
  return 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
}

// Gradient of the smoothed check loss with the dual box [-(1-tau), tau]
// (the orientation the smoothing construction is stated in):
// -A' clamp((b - A beta) / smooth_mu). Pairs with smoothed_check_value.
Eigen::VectorXd smoothed_check_grad(const Eigen::MatrixXd& A,
                                    const Eigen::VectorXd& b,
                                    const Eigen::VectorXd& beta, double tau,
                                    const SmoothingConfig& config);

double smoothed_check_value(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                            const Eigen::VectorXd& beta, double tau,
                            double mu);

// Accelerated proximal gradient (FISTA) on the smoothed composite
//   (1-alpha) C_mu(beta) + (alpha/2)||b - A beta||^2 + lambda ||beta||_1,
// with the dual box oriented to this library's residual convention
// ([-tau, 1-tau]), so the reported objective is directly comparable with the
// interior point and ADMM solvers at the same tau. spec.kappa > 0 solves the
// quantile-Huber objective exactly (mu = kappa); kappa == 0 smooths the check
// loss with mu derived from epsilon. Stops once a Fenchel dual certificate
// bounds the smoothed suboptimality by epsilon / 2, which combined with the
// smoothing error mu * cap_d guarantees a true objective within epsilon of
// the optimum; kkt_residual reports the final duality gap. The elastic path
// (alpha_mix > 0) has no certificate and runs its full iteration budget.
FitResult fista_solve(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                      const QuantileSpec& spec, double lambda, double epsilon,
                      const SmoothingConfig* config = nullptr);

}  // namespace qhr
