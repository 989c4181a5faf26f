#include "qhr/ip_solver.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace qhr {

namespace {

// Rows of C unpacked into parallel arrays; every product with C or C' is a
// single indexed pass instead of a dense matrix product.
struct BoxRows {
  std::vector<Eigen::Index> coord;
  Eigen::VectorXd sign;
  Eigen::VectorXd c;
  Eigen::Index size() const { return sign.size(); }
};

BoxRows make_rows(const PlqPenalty& plq) {
  const auto rows = constraint_rows(plq);
  BoxRows r;
  const Eigen::Index m = static_cast<Eigen::Index>(rows.size());
  r.coord.resize(rows.size());
  r.sign.resize(m);
  r.c.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    r.coord[i] = rows[i].coord;
    r.sign[i] = rows[i].sign;
    r.c[i] = rows[i].bound;
  }
  return r;
}

Eigen::VectorXd apply_C(const BoxRows& rows, const Eigen::VectorXd& u) {
  Eigen::VectorXd out(rows.size());
  for (Eigen::Index i = 0; i < rows.size(); ++i)
    out[i] = rows.sign[i] * u[rows.coord[i]];
  return out;
}

void add_Ct(const BoxRows& rows, const Eigen::VectorXd& w,
            Eigen::VectorXd& out) {
  for (Eigen::Index i = 0; i < rows.size(); ++i)
    out[rows.coord[i]] += rows.sign[i] * w[i];
}

void kkt_into(const PlqPenalty& plq, const BoxRows& rows, const IpState& st,
              double mu, Eigen::VectorXd& F) {
  const Eigen::Index p = plq.primal_dim();
  const Eigen::Index du = plq.dual_dim();
  const Eigen::Index m = rows.size();
  F.resize(p + du + 2 * m);
  F.head(p).noalias() = plq.B.transpose() * st.u;
  auto F2 = F.segment(p, du);
  F2 = plq.b_shift - plq.m_diag.cwiseProduct(st.u);
  F2.noalias() += plq.B * st.x;
  for (Eigen::Index i = 0; i < m; ++i)
    F2[rows.coord[i]] -= rows.sign[i] * st.q[i];
  if (m > 0) {
    F.segment(p + du, m) = apply_C(rows, st.u) + st.s - rows.c;
    F.tail(m) = st.q.cwiseProduct(st.s).array() - mu;
  }
}

double kkt_inf(const PlqPenalty& plq, const BoxRows& rows, const IpState& st,
               Eigen::VectorXd& scratch) {
  kkt_into(plq, rows, st, 0.0, scratch);
  return scratch.size() > 0 ? scratch.lpNorm<Eigen::Infinity>() : 0.0;
}

// Cholesky with a one-time ridge bump of 1e-10 * trace/dim on failure.
bool ridge_llt(Eigen::MatrixXd& S, Eigen::LLT<Eigen::MatrixXd>& llt) {
  llt.compute(S);
  if (llt.info() == Eigen::Success) return true;
  S.diagonal().array() += 1e-10 * S.trace() / static_cast<double>(S.rows());
  llt.compute(S);
  return llt.info() == Eigen::Success;
}

bool compute_direction(const PlqPenalty& plq, const BoxRows& rows,
                       const IpState& st, double mu, SolvePath path,
                       NewtonDirection& dir) {
  const Eigen::Index p = plq.primal_dim();
  const Eigen::Index du = plq.dual_dim();
  const Eigen::Index m = rows.size();
  const Eigen::Index nl = plq.loss_rows;

  Eigen::VectorXd t = plq.m_diag;
  for (Eigen::Index i = 0; i < m; ++i)
    t[rows.coord[i]] += st.q[i] / st.s[i];
  if (du > 0 && t.minCoeff() <= 0.0) return false;

  Eigen::VectorXd r1, r2;
  Eigen::VectorXd r3 = plq.m_diag.cwiseProduct(st.u) - plq.b_shift;
  r3.noalias() -= plq.B * st.x;
  if (m > 0) {
    const Eigen::VectorXd Cu = apply_C(rows, st.u);
    r1 = rows.c - st.s - Cu;
    r2 = (st.q.cwiseProduct(Cu - rows.c)).array() + mu;
    add_Ct(rows, st.q + r2.cwiseQuotient(st.s), r3);
  }
  const Eigen::VectorXd r4 =
      plq.B.transpose() * (r3.cwiseQuotient(t) - st.u);

  const bool aug = plq.augmented();
  if (path == SolvePath::automatic)
    path = (aug && p > nl) ? SolvePath::woodbury : SolvePath::direct;
  if (path == SolvePath::woodbury && !aug) path = SolvePath::direct;

  Eigen::LLT<Eigen::MatrixXd> llt;
  if (path == SolvePath::woodbury) {
    // Omega = G' T_n^{-1} G + T_p^{-1} with G the loss block of B; invert in
    // the loss dimension: Omega^{-1} r = T_p r - T_p G' Phi^{-1} G T_p r,
    // Phi = T_n + G T_p G'.
    const auto G = plq.B.topRows(nl);
    const Eigen::VectorXd tp = t.tail(p);
    Eigen::MatrixXd Phi = Eigen::MatrixXd::Zero(nl, nl);
    Phi.noalias() = (G * tp.asDiagonal()) * G.transpose();
    Phi.diagonal() += t.head(nl);
    if (!ridge_llt(Phi, llt)) return false;
    const Eigen::VectorXd w = tp.cwiseProduct(r4);
    Eigen::VectorXd inner = G * w;
    inner = llt.solve(inner);
    dir.dx = w - tp.cwiseProduct(G.transpose() * inner);
  } else {
    Eigen::MatrixXd Omega(p, p);
    if (aug) {
      const auto G = plq.B.topRows(nl);
      Omega.noalias() =
          G.transpose() * t.head(nl).cwiseInverse().asDiagonal() * G;
      Omega.diagonal() += t.tail(p).cwiseInverse();
    } else {
      Omega.noalias() =
          plq.B.transpose() * t.cwiseInverse().asDiagonal() * plq.B;
    }
    if (!ridge_llt(Omega, llt)) return false;
    dir.dx = llt.solve(r4);
  }

  Eigen::VectorXd Bdx = plq.B * dir.dx;
  dir.du = (Bdx - r3).cwiseQuotient(t);
  if (m > 0) {
    const Eigen::VectorXd Cdu = apply_C(rows, dir.du);
    dir.dq = (r2 + st.q.cwiseProduct(Cdu)).cwiseQuotient(st.s);
    dir.ds = r1 - Cdu;
  } else {
    dir.dq.resize(0);
    dir.ds.resize(0);
  }
  return true;
}

void check_state(const PlqPenalty& plq, const IpState& st, Eigen::Index m) {
  if (st.x.size() != plq.primal_dim() || st.u.size() != plq.dual_dim() ||
      st.s.size() != m || st.q.size() != m)
    throw std::invalid_argument("IpState dimensions disagree with penalty");
}

}  // namespace

Eigen::VectorXd kkt_residual(const PlqPenalty& plq, const IpState& state,
                             double mu) {
  const BoxRows rows = make_rows(plq);
  check_state(plq, state, rows.size());
  Eigen::VectorXd F;
  kkt_into(plq, rows, state, mu, F);
  return F;
}

NewtonDirection newton_step(const PlqPenalty& plq, const IpState& state,
                            const IpConfig& config) {
  const BoxRows rows = make_rows(plq);
  check_state(plq, state, rows.size());
  NewtonDirection dir;
  if (!compute_direction(plq, rows, state, state.barrier_mu,
                         config.solve_path, dir))
    throw std::runtime_error("newton_step: normal matrix factorization failed");
  return dir;
}

IpState initial_state(const PlqPenalty& plq,
                      const std::optional<Eigen::VectorXd>& x0) {
  const BoxRows rows = make_rows(plq);
  IpState st;
  if (x0) {
    if (x0->size() != plq.primal_dim())
      throw std::invalid_argument("initial_state: x0 has wrong dimension");
    st.x = *x0;
  } else {
    st.x = Eigen::VectorXd::Zero(plq.primal_dim());
  }
  st.u = Eigen::VectorXd::Zero(plq.dual_dim());
  st.s = rows.c;
  st.q = Eigen::VectorXd::Ones(rows.size());
  st.barrier_mu =
      rows.size() > 0 ? st.s.dot(st.q) / static_cast<double>(rows.size()) : 0.0;
  return st;
}

FitResult solve(const PlqPenalty& plq, const IpConfig& config,
                const std::optional<Eigen::VectorXd>& x0) {
  plq.validate();
  if (!plq.strictly_feasible_at_zero())
    throw std::invalid_argument(
        "solve: dual box must contain 0 strictly (degenerate bound)");
  const BoxRows rows = make_rows(plq);
  const Eigen::Index m = rows.size();
  if (m == 0 && plq.dual_dim() > 0 && plq.m_diag.minCoeff() <= 0.0)
    throw std::invalid_argument(
        "solve: linear dual coordinate without box rows is unbounded");

  IpState st = initial_state(plq, x0);
  Eigen::VectorXd scratch;
  double Finf = kkt_inf(plq, rows, st, scratch);

  FitResult res;
  res.residual_trace.push_back(Finf);
  bool failed = false;
  NewtonDirection dir;
  IpState trial = st;
  for (int it = 0; it < config.max_iters && Finf > config.kkt_tol; ++it) {
    if (!compute_direction(plq, rows, st, st.barrier_mu, config.solve_path,
                           dir)) {
      res.warning = "normal matrix factorization failed";
      failed = true;
      break;
    }
    double alpha = 1.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (dir.ds[i] < 0.0)
        alpha = std::min(alpha, -config.boundary_frac * st.s[i] / dir.ds[i]);
      if (dir.dq[i] < 0.0)
        alpha = std::min(alpha, -config.boundary_frac * st.q[i] / dir.dq[i]);
    }
    bool accepted = false;
    double Ftrial = 0.0;
    for (int bt = 0; bt < 64; ++bt) {
      trial.x = st.x + alpha * dir.dx;
      trial.u = st.u + alpha * dir.du;
      if (m > 0) {
        trial.s = st.s + alpha * dir.ds;
        trial.q = st.q + alpha * dir.dq;
        if (trial.s.minCoeff() <= 0.0 || trial.q.minCoeff() <= 0.0) {
          alpha *= 0.5;
          continue;
        }
      }
      Ftrial = kkt_inf(plq, rows, trial, scratch);
      if (Ftrial < Finf || Ftrial <= config.kkt_tol) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      res.warning = "line search stalled";
      failed = true;
      break;
    }
    st.x.swap(trial.x);
    st.u.swap(trial.u);
    st.s.swap(trial.s);
    st.q.swap(trial.q);
    Finf = Ftrial;
    res.residual_trace.push_back(Finf);
    ++res.iterations;
    if (m > 0)
      st.barrier_mu = config.sigma * st.s.dot(st.q) / static_cast<double>(m);
  }

  res.x = st.x;
  res.support = support_of(st.x);
  res.objective = plq_eval(plq, st.x);
  res.kkt_residual = Finf;
  res.status = failed ? SolveStatus::numerical_failure
               : (Finf <= config.kkt_tol ? SolveStatus::converged
                                         : SolveStatus::max_iters);
  return res;
}

FitResult refit_on_support(const PlqBuilder& plq_builder,
                           const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                           const std::vector<int>& support,
                           const IpConfig& config) {
  const Eigen::Index p = A.cols();
  std::vector<bool> seen(static_cast<std::size_t>(p), false);
  for (int j : support) {
    if (j < 0 || j >= p)
      throw std::invalid_argument("refit_on_support: index out of range");
    if (seen[static_cast<std::size_t>(j)])
      throw std::invalid_argument("refit_on_support: duplicate index");
    seen[static_cast<std::size_t>(j)] = true;
  }

  const Eigen::Index k = static_cast<Eigen::Index>(support.size());
  Eigen::MatrixXd As(A.rows(), k);
  for (Eigen::Index j = 0; j < k; ++j) As.col(j) = A.col(support[j]);
  const PlqPenalty plq = plq_builder(As, b);

  FitResult res;
  if (k == 0) {
    res.x = Eigen::VectorXd::Zero(p);
    res.objective = plq_eval(plq, Eigen::VectorXd(0));
    res.status = SolveStatus::converged;
    return res;
  }
  res = solve(plq, config);
  Eigen::VectorXd full = Eigen::VectorXd::Zero(p);
  for (Eigen::Index j = 0; j < k; ++j) full[support[j]] = res.x[j];
  res.x = std::move(full);
  res.support = support_of(res.x);
  if (k > A.rows())
    res.warning =
        "support larger than the number of rows; solution may be non-unique";
  return res;
}

}  // namespace qhr
