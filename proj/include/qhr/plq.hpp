#pragma once

#include <Eigen/Core>
#include <vector>

#include "qhr/quantile_loss.hpp"
#include "qhr/types.hpp"

namespace qhr {

// Piecewise linear-quadratic penalty in conjugate form
//
//   f(x) = sup { <u, B x + b_shift> - u' M u / 2 : C u <= c }.
//
// Every penalty this library builds has diagonal M and a constraint matrix C
// whose rows are signed unit vectors, i.e. the dual feasible set is a
// per-coordinate box. The struct stores that structure directly (m_diag and
// lower/upper bounds, infinite when a side is unconstrained); the canonical
// (M, C, c) matrices are materialized on demand for oracles and diagnostics.
//
// Dual coordinates split into two blocks: the first `loss_rows` belong to the
// data-fitting loss, the remaining primal_dim() coordinates (present iff
// l1_lambda > 0 was attached via augment_l1) implement the l1 penalty through
// the bound |u_i| <= lambda paired with an identity block in B.
struct PlqPenalty {
  Eigen::VectorXd m_diag;
  Eigen::MatrixXd B;
  Eigen::VectorXd b_shift;
  Eigen::VectorXd lower, upper;
  Eigen::Index loss_rows = 0;
  double l1_lambda = 0.0;

  Eigen::Index dual_dim() const { return B.rows(); }
  Eigen::Index primal_dim() const { return B.cols(); }
  bool augmented() const { return loss_rows < dual_dim(); }

  // Shape and nonnegativity checks; throws std::invalid_argument on failure.
  // The curvature tolerance is 1e-10 relative to the largest diagonal entry,
  // and the dual box must contain 0 (not necessarily strictly; the interior
  // point solver additionally requires strict containment, checked by
  // strictly_feasible_at_zero()).
  void validate() const;

  // True when every finite bound keeps u = 0 strictly inside the box, which
  // is what the interior point initialization needs.
  bool strictly_feasible_at_zero() const;

  Eigen::MatrixXd dense_M() const;
  Eigen::MatrixXd dense_C() const;
  Eigen::VectorXd dense_c() const;
};

// One row of C: sign * u[coord] <= bound.
struct ConstraintRow {
  Eigen::Index coord;
  double sign;
  double bound;
};

// Rows of C in canonical order: upper bounds of the loss block, lower bounds
// of the loss block, then the same two groups for the l1 block.
std::vector<ConstraintRow> constraint_rows(const PlqPenalty& plq);

// Quantile penalty f(x) = sum_i loss(b_i - a_i' x) in conjugate form:
// B = -A, b_shift = b, M = kappa * I, dual box [-tau, 1-tau] per coordinate.
// kappa == 0 yields the check loss, kappa > 0 the quantile-Huber loss.
PlqPenalty build_plq(const QuantileSpec& spec, const Eigen::MatrixXd& A,
                     const Eigen::VectorXd& b);

// Squared-error penalty (1/2)||b - A x||^2: M = I and an unconstrained dual.
PlqPenalty build_l2_plq(const Eigen::MatrixXd& A, const Eigen::VectorXd& b);

// Attaches lambda * ||x||_1 to an existing penalty by appending an identity
// block to B and a symmetric box |u| <= lambda on the new dual coordinates.
// The base penalty must not already carry an l1 block.
PlqPenalty augment_l1(const PlqPenalty& base, double lambda);

// Exact evaluation of f(x) via the per-coordinate closed-form maximizer
// (clamp of v_i / m_i onto the box when m_i > 0, box endpoint otherwise).
// Returns +infinity when some linear coordinate is unbounded in the
// ascent direction.
double plq_eval(const PlqPenalty& plq, const Eigen::VectorXd& x);

// Smallest l1 weight that zeroes every coordinate of the selection gradient
// at x = 0; anchor of the regularization grids.
double l1_lambda_max(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                     const QuantileSpec& spec);
double l1_lambda_max_l2(const Eigen::MatrixXd& A, const Eigen::VectorXd& b);

}  // namespace qhr
