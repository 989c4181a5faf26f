#pragma once

#include <Eigen/Core>
#include <vector>

#include "qhr/ip_solver.hpp"
#include "qhr/types.hpp"

namespace qhr {

struct OmpConfig {
  int max_support = 1;
  // Stop once the per-iteration decrease of the mean loss falls to or below
  // this; negative selects the default 1e-10 * initial mean loss.
  double stop_tol = -1.0;
  IpConfig refit_config{};
};

// History of a greedy run. `losses` holds the mean loss (1/n) * sum loss(r_i)
// after each refit, one entry per selected column; `coefficient_path` the
// full-length coefficient vector after each refit (selection is nested, so
// entry k is also the size-(k+1) fit); `coefficients` the final vector.
struct OmpTrace {
  std::vector<int> selected;
  std::vector<double> losses;
  std::vector<Eigen::VectorXd> coefficient_path;
  Eigen::VectorXd coefficients;
};

struct OmpResult {
  OmpTrace trace;
  FitResult fit;
};

// Column with the largest |g(r)' A_j| among those not excluded, where g is
// the selection gradient of the loss (smooth gradient for kappa > 0, the
// check-loss surrogate otherwise). Ties resolve to the lowest index.
int select_next(const Eigen::MatrixXd& A, const Eigen::VectorXd& r,
                const QuantileSpec& spec, const std::vector<int>& excluded);

// Greedy forward selection: pick the best-correlated column, refit the
// unpenalized loss on the support so far via the interior point solver,
// update the residual, and repeat until max_support columns are chosen or
// the loss stops improving by more than stop_tol.
OmpResult run_omp(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                  const QuantileSpec& spec, const OmpConfig& config);

}  // namespace qhr
