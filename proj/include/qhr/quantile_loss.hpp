#pragma once

#include <Eigen/Core>
#include <cmath>
#include <vector>

#include "qhr/types.hpp"

namespace qhr {

// Asymmetric check loss at quantile level tau, the convention used throughout
// this library: slope (1-tau) on positive residuals, slope -tau on negative
// ones, i.e. c(r) = tau*max(-r,0) + (1-tau)*max(r,0).
template <typename Scalar>
Scalar check_loss(Scalar r, Scalar tau) {
  return r >= Scalar(0) ? (Scalar(1) - tau) * r : -tau * r;
}

// Quantile-Huber loss: the check loss with its kink smoothed to a quadratic
// on the closed band [-tau*kappa, (1-tau)*kappa]. Continuously differentiable
// in r for kappa > 0, and decreases pointwise to the check loss as kappa -> 0.
template <typename Scalar>
Scalar quantile_huber(Scalar x, Scalar tau, Scalar kappa) {
  const Scalar lo = -tau * kappa;
  const Scalar hi = (Scalar(1) - tau) * kappa;
  if (x < lo) return -tau * x - kappa * tau * tau / Scalar(2);
  if (x > hi)
    return (Scalar(1) - tau) * x -
           kappa * (Scalar(1) - tau) * (Scalar(1) - tau) / Scalar(2);
  return x * x / (Scalar(2) * kappa);
}

// Derivative of quantile_huber: -tau left of the band, x/kappa inside,
// (1-tau) right of it. Every value lies in [-tau, 1-tau].
template <typename Scalar>
Scalar quantile_huber_grad(Scalar x, Scalar tau, Scalar kappa) {
  if (x < -tau * kappa) return -tau;
  if (x > (Scalar(1) - tau) * kappa) return Scalar(1) - tau;
  return x / kappa;
}

template <typename Derived>
double eval_quantile_check(const Eigen::MatrixBase<Derived>& r, double tau) {
  QuantileSpec{tau, 0.0}.validate();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i)
    acc += check_loss(static_cast<double>(r.derived()(i)), tau);
  return acc;
}

template <typename Derived>
double eval_quantile_huber(const Eigen::MatrixBase<Derived>& r,
                           const QuantileSpec& spec) {
  spec.validate();
  if (!(spec.kappa > 0.0))
    throw std::invalid_argument(
        "eval_quantile_huber: kappa must be > 0 (use eval_quantile_check)");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i)
    acc += quantile_huber(static_cast<double>(r.derived()(i)), spec.tau,
                          spec.kappa);
  return acc;
}

// Loss of residual vector r under spec: check loss when kappa == 0,
// quantile-Huber otherwise.
template <typename Derived>
double eval_loss(const Eigen::MatrixBase<Derived>& r,
                 const QuantileSpec& spec) {
  return spec.kappa > 0.0 ? eval_quantile_huber(r, spec)
                          : eval_quantile_check(r, spec.tau);
}

template <typename Derived>
Eigen::VectorXd grad_quantile_huber(const Eigen::MatrixBase<Derived>& r,
                                    const QuantileSpec& spec) {
  spec.validate();
  if (!(spec.kappa > 0.0))
    throw std::invalid_argument("grad_quantile_huber: kappa must be > 0");
  Eigen::VectorXd g(r.size());
  for (Eigen::Index i = 0; i < r.size(); ++i)
    g[i] = quantile_huber_grad(static_cast<double>(r.derived()(i)), spec.tau,
                               spec.kappa);
  return g;
}

// Greedy-selection surrogate for the nonsmooth check loss:
// (1-tau)*max(r,0) - tau*max(-r,0) elementwise. Each entry carries the sign
// of the one-sided slope at r and scales with |r|; exactly zero at r == 0.
template <typename Derived>
Eigen::VectorXd subgrad_quantile_check(const Eigen::MatrixBase<Derived>& r,
                                       double tau) {
  QuantileSpec{tau, 0.0}.validate();
  Eigen::VectorXd g(r.size());
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    const double ri = static_cast<double>(r.derived()(i));
    g[i] = ri > 0.0 ? (1.0 - tau) * ri : tau * ri;
  }
  return g;
}

// Selection gradient used by the greedy driver: smooth gradient when
// kappa > 0, the check-loss surrogate otherwise. Both agree in sign pattern.
template <typename Derived>
Eigen::VectorXd selection_gradient(const Eigen::MatrixBase<Derived>& r,
                                   const QuantileSpec& spec) {
  return spec.kappa > 0.0 ? grad_quantile_huber(r, spec)
                          : subgrad_quantile_check(r, spec.tau);
}

// Index partition of residuals by the quantile-Huber branches:
// e0 left of the quadratic band, e1 inside it (closed), e2 right of it.
struct ResidualClasses {
  std::vector<int> e0, e1, e2;
};

template <typename Derived>
ResidualClasses classify_residuals(const Eigen::MatrixBase<Derived>& r,
                                   const QuantileSpec& spec) {
  spec.validate();
  if (!(spec.kappa > 0.0))
    throw std::invalid_argument("classify_residuals: kappa must be > 0");
  const double lo = -spec.tau * spec.kappa;
  const double hi = (1.0 - spec.tau) * spec.kappa;
  ResidualClasses cls;
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    const double ri = static_cast<double>(r.derived()(i));
    if (ri < lo)
      cls.e0.push_back(static_cast<int>(i));
    else if (ri > hi)
      cls.e2.push_back(static_cast<int>(i));
    else
      cls.e1.push_back(static_cast<int>(i));
  }
  return cls;
}

}  // namespace qhr
