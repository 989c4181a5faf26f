#include "qhr/plq.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace qhr {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

void PlqPenalty::validate() const {
  const Eigen::Index du = dual_dim();
  if (m_diag.size() != du || b_shift.size() != du || lower.size() != du ||
      upper.size() != du)
    throw std::invalid_argument("PlqPenalty: block sizes disagree");
  if (loss_rows < 0 || loss_rows > du)
    throw std::invalid_argument("PlqPenalty: loss_rows out of range");
  if (augmented() && du - loss_rows != primal_dim())
    throw std::invalid_argument(
        "PlqPenalty: l1 block must have one dual coordinate per primal");
  const double m_max = du > 0 ? m_diag.maxCoeff() : 0.0;
  const double tol_psd = 1e-10 * std::max(1.0, m_max);
  for (Eigen::Index i = 0; i < du; ++i) {
    if (std::isnan(m_diag[i]) || m_diag[i] < -tol_psd)
      throw std::invalid_argument("PlqPenalty: curvature must be >= 0");
    if (std::isnan(lower[i]) || std::isnan(upper[i]) || lower[i] > upper[i])
      throw std::invalid_argument("PlqPenalty: empty dual box");
    if (lower[i] > 0.0 || upper[i] < 0.0)
      throw std::invalid_argument("PlqPenalty: dual box must contain 0");
  }
}

bool PlqPenalty::strictly_feasible_at_zero() const {
  for (Eigen::Index i = 0; i < dual_dim(); ++i) {
    if (std::isfinite(upper[i]) && !(upper[i] > 0.0)) return false;
    if (std::isfinite(lower[i]) && !(lower[i] < 0.0)) return false;
  }
  return true;
}

std::vector<ConstraintRow> constraint_rows(const PlqPenalty& plq) {
  std::vector<ConstraintRow> rows;
  const Eigen::Index du = plq.dual_dim();
  const auto emit_block = [&](Eigen::Index begin, Eigen::Index end) {
    for (Eigen::Index i = begin; i < end; ++i)
      if (std::isfinite(plq.upper[i])) rows.push_back({i, 1.0, plq.upper[i]});
    for (Eigen::Index i = begin; i < end; ++i)
      if (std::isfinite(plq.lower[i])) rows.push_back({i, -1.0, -plq.lower[i]});
  };
  emit_block(0, plq.loss_rows);
  emit_block(plq.loss_rows, du);
  return rows;
}

Eigen::MatrixXd PlqPenalty::dense_M() const {
  return Eigen::MatrixXd(m_diag.asDiagonal());
}

Eigen::MatrixXd PlqPenalty::dense_C() const {
  const auto rows = constraint_rows(*this);
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(
      static_cast<Eigen::Index>(rows.size()), dual_dim());
  for (std::size_t r = 0; r < rows.size(); ++r)
    C(static_cast<Eigen::Index>(r), rows[r].coord) = rows[r].sign;
  return C;
}

Eigen::VectorXd PlqPenalty::dense_c() const {
  const auto rows = constraint_rows(*this);
  Eigen::VectorXd c(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    c[static_cast<Eigen::Index>(r)] = rows[r].bound;
  return c;
}

PlqPenalty build_plq(const QuantileSpec& spec, const Eigen::MatrixXd& A,
                     const Eigen::VectorXd& b) {
  spec.validate();
  if (A.rows() != b.size())
    throw std::invalid_argument("build_plq: A and b row counts disagree");
  const Eigen::Index n = A.rows();
  PlqPenalty plq;
  plq.m_diag = Eigen::VectorXd::Constant(n, spec.kappa);
  plq.B = -A;
  plq.b_shift = b;
  plq.lower = Eigen::VectorXd::Constant(n, -spec.tau);
  plq.upper = Eigen::VectorXd::Constant(n, 1.0 - spec.tau);
  plq.loss_rows = n;
  plq.validate();
  return plq;
}

PlqPenalty build_l2_plq(const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
  if (A.rows() != b.size())
    throw std::invalid_argument("build_l2_plq: A and b row counts disagree");
  const Eigen::Index n = A.rows();
  PlqPenalty plq;
  plq.m_diag = Eigen::VectorXd::Ones(n);
  plq.B = -A;
  plq.b_shift = b;
  plq.lower = Eigen::VectorXd::Constant(n, -kInf);
  plq.upper = Eigen::VectorXd::Constant(n, kInf);
  plq.loss_rows = n;
  plq.validate();
  return plq;
}

PlqPenalty augment_l1(const PlqPenalty& base, double lambda) {
  base.validate();
  if (base.augmented())
    throw std::invalid_argument("augment_l1: penalty already has an l1 block");
  if (!(lambda >= 0.0))
    throw std::invalid_argument("augment_l1: lambda must be >= 0");
  const Eigen::Index n = base.dual_dim();
  const Eigen::Index p = base.primal_dim();
  PlqPenalty plq;
  plq.m_diag.setZero(n + p);
  plq.m_diag.head(n) = base.m_diag;
  plq.B.setZero(n + p, p);
  plq.B.topRows(n) = base.B;
  plq.B.bottomRows(p).setIdentity();
  plq.b_shift.setZero(n + p);
  plq.b_shift.head(n) = base.b_shift;
  plq.lower.setConstant(n + p, -lambda);
  plq.lower.head(n) = base.lower;
  plq.upper.setConstant(n + p, lambda);
  plq.upper.head(n) = base.upper;
  plq.loss_rows = n;
  plq.l1_lambda = lambda;
  plq.validate();
  return plq;
}

double plq_eval(const PlqPenalty& plq, const Eigen::VectorXd& x) {
  if (x.size() != plq.primal_dim())
    throw std::invalid_argument("plq_eval: x has wrong dimension");
  const Eigen::VectorXd v = plq.B * x + plq.b_shift;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < plq.dual_dim(); ++i) {
    const double m = plq.m_diag[i];
    if (m > 0.0) {
      const double u = std::min(plq.upper[i], std::max(plq.lower[i], v[i] / m));
      acc += u * v[i] - 0.5 * m * u * u;
    } else if (v[i] > 0.0) {
      if (!std::isfinite(plq.upper[i])) return kInf;
      acc += plq.upper[i] * v[i];
    } else if (v[i] < 0.0) {
      if (!std::isfinite(plq.lower[i])) return kInf;
      acc += plq.lower[i] * v[i];
    }
  }
  return acc;
}

double l1_lambda_max(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                     const QuantileSpec& spec) {
  return (A.transpose() * selection_gradient(b, spec))
      .lpNorm<Eigen::Infinity>();
}

double l1_lambda_max_l2(const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
  return (A.transpose() * b).lpNorm<Eigen::Infinity>();
}

}  // namespace qhr
