#pragma once

#include <Eigen/Core>
#include <functional>
#include <optional>

#include "qhr/plq.hpp"
#include "qhr/types.hpp"

namespace qhr {

// Which factorization backs the reduced normal-equation solve for the primal
// direction. `automatic` picks the small-dimension (Woodbury) route whenever
// an l1 block is present and the primal dimension exceeds the loss dimension.
enum class SolvePath { automatic, direct, woodbury };

struct IpConfig {
  int max_iters = 200;
  double kkt_tol = 1e-8;          // infinity-norm bound on the KKT residual
  double sigma = 0.1;             // barrier reduction factor per step
  double boundary_frac = 0.995;   // fraction-to-boundary for (s, q) jointly
  SolvePath solve_path = SolvePath::automatic;
};

// Primal-dual iterate: primal x, dual u, slack s and multiplier q for the
// box rows C u <= c, plus the current barrier parameter. s and q stay
// strictly positive throughout.
struct IpState {
  Eigen::VectorXd x, u, s, q;
  double barrier_mu = 0.0;
};

struct NewtonDirection {
  Eigen::VectorXd dx, du, ds, dq;
};

// Stationarity system of the penalty minimization, stacked as
// [B'u; b + Bx - Mu - C'q; Cu + s - c; q.*s - mu]. mu = 0 gives the exact
// KKT residual used for convergence tests; mu > 0 the relaxed central-path
// version targeted by each Newton step.
Eigen::VectorXd kkt_residual(const PlqPenalty& plq, const IpState& state,
                             double mu = 0.0);

// One Newton direction for the relaxed system at state.barrier_mu, computed
// by block elimination: T = M + C'QS^{-1}C is diagonal for box constraints,
// so the only factorization is the p x p (or loss_rows x loss_rows on the
// Woodbury route) normal matrix. Throws std::runtime_error if that
// factorization breaks down even after a one-time ridge bump.
NewtonDirection newton_step(const PlqPenalty& plq, const IpState& state,
                            const IpConfig& config = {});

// Starting iterate used by solve(): x = x0 (or 0), u = 0, s = c, q = 1,
// barrier_mu = s'q / m.
IpState initial_state(const PlqPenalty& plq,
                      const std::optional<Eigen::VectorXd>& x0 = {});

// Damped primal-dual interior point method. Each iteration takes the Newton
// direction, caps the step with the fraction-to-boundary rule on (s, q), and
// halves it until the exact KKT residual decreases; a step that cannot
// decrease it reports numerical_failure with the best iterate so far. After
// every accepted step the barrier shrinks to sigma * s'q / m. Degenerate
// vertices of the kappa = 0 linear program can stop progress near but above
// kkt_tol; callers that sweep a lambda grid should treat such cells as data
// points, not fatal errors (see run_experiment).
FitResult solve(const PlqPenalty& plq, const IpConfig& config = {},
                const std::optional<Eigen::VectorXd>& x0 = {});

using PlqBuilder = std::function<PlqPenalty(const Eigen::MatrixXd&,
                                            const Eigen::VectorXd&)>;

// Unpenalized re-estimation on a fixed column subset: builds the penalty on
// A restricted to `support`, solves it, and scatters the coefficients back
// into a length-p vector (exact zeros off the support). A support larger
// than the row count is attempted anyway with a warning in the result.
FitResult refit_on_support(const PlqBuilder& plq_builder,
                           const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                           const std::vector<int>& support,
                           const IpConfig& config = {});

}  // namespace qhr
