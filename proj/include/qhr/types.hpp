#pragma once

#include <Eigen/Core>
#include <stdexcept>
#include <string>
#include <vector>

namespace qhr {

// Quantile level and Huber smoothing radius. kappa == 0 selects the
// piecewise-linear check loss, kappa > 0 its smoothed (quantile-Huber)
// counterpart.
struct QuantileSpec {
  double tau = 0.5;
  double kappa = 0.0;

  void validate() const {
    if (!(tau > 0.0 && tau < 1.0))
      throw std::invalid_argument("QuantileSpec: tau must lie in (0,1)");
    if (!(kappa >= 0.0))
      throw std::invalid_argument("QuantileSpec: kappa must be >= 0");
  }
};

enum class SolveStatus { converged, max_iters, numerical_failure };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::max_iters: return "max_iters";
    default: return "numerical_failure";
  }
}

// Outcome of any solver in this library. `objective` is the value of the
// minimized objective (empirical loss plus any penalty term); `kkt_residual`
// is the solver's own convergence measure at the final iterate, and
// `residual_trace` records that measure per accepted iteration.
struct FitResult {
  Eigen::VectorXd x;
  std::vector<int> support;  // 0-based column indices, ascending
  double objective = 0.0;
  int iterations = 0;
  double kkt_residual = 0.0;
  SolveStatus status = SolveStatus::numerical_failure;
  std::vector<double> residual_trace;
  std::string warning;
};

// Support set of a coefficient vector: entries with |x_i| above a relative
// floor of 1e-6 * max(1, ||x||_inf).
inline std::vector<int> support_of(const Eigen::VectorXd& x) {
  const double floor = 1e-6 * std::max(1.0, x.lpNorm<Eigen::Infinity>());
  std::vector<int> s;
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (std::abs(x[i]) > floor) s.push_back(static_cast<int>(i));
  return s;
}

}  // namespace qhr
