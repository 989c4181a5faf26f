#include "qhr/omp.hpp"

#include <cmath>
#include <stdexcept>

#include "qhr/plq.hpp"
#include "qhr/quantile_loss.hpp"

namespace qhr {

int select_next(const Eigen::MatrixXd& A, const Eigen::VectorXd& r,
                const QuantileSpec& spec, const std::vector<int>& excluded) {
  if (A.rows() != r.size())
    throw std::invalid_argument("select_next: A and r row counts disagree");
  std::vector<bool> skip(static_cast<std::size_t>(A.cols()), false);
  for (int j : excluded) {
    if (j < 0 || j >= A.cols())
      throw std::invalid_argument("select_next: excluded index out of range");
    skip[static_cast<std::size_t>(j)] = true;
  }
  const Eigen::VectorXd scores =
      (A.transpose() * selection_gradient(r, spec)).cwiseAbs();
  int best = -1;
  double best_score = -1.0;
  for (Eigen::Index j = 0; j < A.cols(); ++j) {
    if (skip[static_cast<std::size_t>(j)]) continue;
    if (scores[j] > best_score) {
      best_score = scores[j];
      best = static_cast<int>(j);
    }
  }
  if (best < 0)
    throw std::invalid_argument("select_next: every column is excluded");
  return best;
}

OmpResult run_omp(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                  const QuantileSpec& spec, const OmpConfig& config) {
  spec.validate();
  if (A.rows() != b.size())
    throw std::invalid_argument("run_omp: A and b row counts disagree");
  if (config.max_support < 1 || config.max_support > A.cols())
    throw std::invalid_argument("run_omp: max_support must lie in [1, p]");

  const double n = static_cast<double>(A.rows());
  const PlqBuilder builder = [&spec](const Eigen::MatrixXd& As,
                                     const Eigen::VectorXd& bs) {
    return build_plq(spec, As, bs);
  };

  OmpResult out;
  Eigen::VectorXd r = b;
  double prev_loss = eval_loss(r, spec) / n;
  const double stop_tol =
      config.stop_tol >= 0.0 ? config.stop_tol : 1e-10 * prev_loss;

  for (int k = 0; k < config.max_support; ++k) {
    const int j = select_next(A, r, spec, out.trace.selected);
    out.trace.selected.push_back(j);
    out.fit = refit_on_support(builder, A, b, out.trace.selected,
                               config.refit_config);
    r = b - A * out.fit.x;
    const double loss = eval_loss(r, spec) / n;
    out.trace.losses.push_back(loss);
    out.trace.coefficient_path.push_back(out.fit.x);
    if (out.fit.status == SolveStatus::numerical_failure) break;
    const double decrease = prev_loss - loss;
    prev_loss = loss;
    if (decrease <= stop_tol) break;
  }
  out.trace.coefficients = out.fit.x;
  return out;
}

}  // namespace qhr
