#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "doctest.h"

#include "qhr/ip_solver.hpp"
#include "qhr/plq.hpp"
#include "qhr/quantile_loss.hpp"
#include "qhr/rng.hpp"

using Eigen::MatrixXd;
using Eigen::VectorXd;
using namespace qhr;

namespace {

MatrixXd random_matrix(Rng& rng, int n, int p) {
  MatrixXd A(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) A(i, j) = rng.gaussian();
  return A;
}

VectorXd random_vector(Rng& rng, int n) {
  VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.gaussian();
  return v;
}

// Strictly interior iterate with every slack positive.
IpState interior_state(const PlqPenalty& plq, Rng& rng, double mu) {
  IpState st;
  st.x = random_vector(rng, static_cast<int>(plq.primal_dim()));
  st.u.resize(plq.dual_dim());
  for (Eigen::Index i = 0; i < plq.dual_dim(); ++i) {
    const double lo = std::isfinite(plq.lower[i]) ? plq.lower[i] : -1.0;
    const double hi = std::isfinite(plq.upper[i]) ? plq.upper[i] : 1.0;
    st.u[i] = lo + (0.25 + 0.5 * rng.uniform()) * (hi - lo);
  }
  const Eigen::Index m = plq.dense_C().rows();
  st.s.resize(m);
  st.q.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    st.s[i] = 0.2 + rng.uniform();
    st.q[i] = 0.2 + rng.uniform();
  }
  st.barrier_mu = mu;
  return st;
}

// Stationarity residual assembled from the dense (M, C, c) materialization,
// no structure exploited.
VectorXd dense_residual(const PlqPenalty& plq, const IpState& st, double mu) {
  const MatrixXd M = plq.dense_M();
  const MatrixXd C = plq.dense_C();
  const VectorXd c = plq.dense_c();
  const Eigen::Index p = plq.primal_dim();
  const Eigen::Index du = plq.dual_dim();
  const Eigen::Index m = C.rows();
  VectorXd F(p + du + 2 * m);
  F.head(p) = plq.B.transpose() * st.u;
  F.segment(p, du) =
      plq.b_shift + plq.B * st.x - M * st.u - C.transpose() * st.q;
  if (m > 0) {
    F.segment(p + du, m) = C * st.u + st.s - c;
    F.tail(m) = st.q.cwiseProduct(st.s).array() - mu;
  }
  return F;
}

// Newton direction on the relaxed system via one dense factorization of the
// full 4-block Jacobian.
NewtonDirection dense_newton(const PlqPenalty& plq, const IpState& st,
                             double mu) {
  const MatrixXd M = plq.dense_M();
  const MatrixXd C = plq.dense_C();
  const Eigen::Index p = plq.primal_dim();
  const Eigen::Index du = plq.dual_dim();
  const Eigen::Index m = C.rows();
  const Eigen::Index dim = p + du + 2 * m;
  MatrixXd J = MatrixXd::Zero(dim, dim);
  J.block(0, p, p, du) = plq.B.transpose();
  J.block(p, 0, du, p) = plq.B;
  J.block(p, p, du, du) = -M;
  if (m > 0) {
    J.block(p, p + du + m, du, m) = -C.transpose();
    J.block(p + du, p, m, du) = C;
    J.block(p + du, p + du, m, m).setIdentity();
    J.block(p + du + m, p + du, m, m) = st.q.asDiagonal();
    J.block(p + du + m, p + du + m, m, m) = st.s.asDiagonal();
  }
  const VectorXd d = J.fullPivLu().solve(-dense_residual(plq, st, mu));
  NewtonDirection dir;
  dir.dx = d.head(p);
  dir.du = d.segment(p, du);
  dir.ds = d.segment(p + du, m);
  dir.dq = d.tail(m);
  return dir;
}

void check_direction(const NewtonDirection& got, const NewtonDirection& want,
                     double tol) {
  const double scale =
      std::max({1.0, want.dx.norm(), want.du.norm(), want.ds.norm(),
                want.dq.norm()});
  CHECK((got.dx - want.dx).norm() <= tol * scale);
  CHECK((got.du - want.du).norm() <= tol * scale);
  CHECK((got.ds - want.ds).norm() <= tol * scale);
  CHECK((got.dq - want.dq).norm() <= tol * scale);
}

double median_step_seconds(const PlqPenalty& plq, int reps) {
  const IpState st = initial_state(plq);
  IpConfig cfg;
  cfg.solve_path = SolvePath::woodbury;
  std::vector<double> times;
  volatile double sink = 0.0;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    const NewtonDirection dir = newton_step(plq, st, cfg);
    const auto t1 = std::chrono::steady_clock::now();
    sink += dir.dx[0];
    times.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  std::sort(times.begin(), times.end());
  return times[times.size() / 2];
}

}  // namespace

TEST_CASE("stationarity residual") {
  SUBCASE("zero at the smooth least-squares optimum") {
    VectorXd b(2);
    b << 1.0, 2.0;
    const PlqPenalty plq = build_l2_plq(MatrixXd::Identity(2, 2), b);
    IpState st;
    st.x = b;
    st.u = VectorXd::Zero(2);
    st.s.resize(0);
    st.q.resize(0);
    CHECK(kkt_residual(plq, st).lpNorm<Eigen::Infinity>() <= 1e-15);
  }
  SUBCASE("scalar median at the interpolating point") {
    const PlqPenalty plq = build_plq({0.5, 0.0}, MatrixXd::Ones(1, 1),
                                     VectorXd::Constant(1, 3.0));
    IpState st;
    st.x = VectorXd::Constant(1, 3.0);
    st.u = VectorXd::Zero(1);
    st.s = VectorXd::Constant(2, 0.5);
    st.q = VectorXd::Constant(2, 0.3);
    const VectorXd F = kkt_residual(plq, st);
    REQUIRE(F.size() == 6);
    // dual feasibility, stationarity, and primal feasibility all vanish;
    // only complementarity is nonzero
    CHECK(F.head(4).lpNorm<Eigen::Infinity>() <= 1e-15);
    CHECK(F.tail(2).lpNorm<Eigen::Infinity>() > 0.0);

    // mismatched multipliers leave the box blocks zero
    st.q << 0.3, 0.7;
    const VectorXd G = kkt_residual(plq, st);
    CHECK(G[0] == 0.0);
    CHECK(G.segment(2, 2).lpNorm<Eigen::Infinity>() <= 1e-15);
  }
  SUBCASE("agrees with the dense matrix expression") {
    Rng rng(311);
    for (int trial = 0; trial < 20; ++trial) {
      const MatrixXd A = random_matrix(rng, 6, 4);
      const VectorXd b = random_vector(rng, 6);
      PlqPenalty plq = build_plq({0.3, 0.8}, A, b);
      if (trial % 2 == 0) plq = augment_l1(plq, 0.4);
      const double mu = trial % 3 == 0 ? 0.0 : 0.07;
      const IpState st = interior_state(plq, rng, mu);
      const VectorXd got = kkt_residual(plq, st, mu);
      const VectorXd want = dense_residual(plq, st, mu);
      REQUIRE(got.size() == want.size());
      CHECK((got - want).lpNorm<Eigen::Infinity>() <= 1e-12);
    }
  }
  SUBCASE("dimension mismatch rejected") {
    const PlqPenalty plq = build_plq({0.5, 1.0}, MatrixXd::Identity(2, 2),
                                     VectorXd::Ones(2));
    IpState st;
    st.x = VectorXd::Zero(2);
    st.u = VectorXd::Zero(3);
    st.s = VectorXd::Ones(4);
    st.q = VectorXd::Ones(4);
    CHECK_THROWS_AS(kkt_residual(plq, st), std::invalid_argument);
  }
}

TEST_CASE("Newton direction matches a dense solve of the full system") {
  Rng rng(331);
  SUBCASE("plain quantile-Huber blocks") {
    for (int trial = 0; trial < 15; ++trial) {
      const MatrixXd A = random_matrix(rng, 5, 3);
      const VectorXd b = random_vector(rng, 5);
      const PlqPenalty plq = build_plq({0.35, 0.7}, A, b);
      const IpState st = interior_state(plq, rng, 0.05);
      check_direction(newton_step(plq, st), dense_newton(plq, st, 0.05), 1e-8);
    }
  }
  SUBCASE("l1-augmented blocks, tall and wide") {
    for (int trial = 0; trial < 15; ++trial) {
      const bool wide = trial % 2 == 0;
      const int n = wide ? 3 : 5;
      const int p = wide ? 8 : 3;
      const MatrixXd A = random_matrix(rng, n, p);
      const VectorXd b = random_vector(rng, n);
      const PlqPenalty plq = augment_l1(build_plq({0.45, 1.2}, A, b), 0.6);
      const IpState st = interior_state(plq, rng, 0.02);
      check_direction(newton_step(plq, st), dense_newton(plq, st, 0.02), 1e-8);
    }
  }
  SUBCASE("check-loss blocks (zero curvature)") {
    for (int trial = 0; trial < 10; ++trial) {
      const MatrixXd A = random_matrix(rng, 6, 2);
      const VectorXd b = random_vector(rng, 6);
      const PlqPenalty plq = build_plq({0.25, 0.0}, A, b);
      const IpState st = interior_state(plq, rng, 0.05);
      check_direction(newton_step(plq, st), dense_newton(plq, st, 0.05), 1e-8);
    }
  }
  SUBCASE("zero direction at a stationary smooth point") {
    VectorXd b(2);
    b << 1.0, 2.0;
    const PlqPenalty plq = build_l2_plq(MatrixXd::Identity(2, 2), b);
    IpState st;
    st.x = b;
    st.u = VectorXd::Zero(2);
    st.s.resize(0);
    st.q.resize(0);
    st.barrier_mu = 0.0;
    const NewtonDirection dir = newton_step(plq, st);
    CHECK(dir.dx.norm() <= 1e-13);
    CHECK(dir.du.norm() <= 1e-13);
  }
}

TEST_CASE("small-dimension route equals the direct factorization") {
  Rng rng(347);
  for (int trial = 0; trial < 12; ++trial) {
    const int n = 4 + static_cast<int>(rng.next_u64() % 4);
    const int p = 10 + static_cast<int>(rng.next_u64() % 10);
    const MatrixXd A = random_matrix(rng, n, p);
    const VectorXd b = random_vector(rng, n);
    const double kappa = trial % 2 == 0 ? 0.0 : 0.9;
    const PlqPenalty plq = augment_l1(build_plq({0.4, kappa}, A, b), 0.5);
    const IpState st = interior_state(plq, rng, 0.03);
    IpConfig direct, wood;
    direct.solve_path = SolvePath::direct;
    wood.solve_path = SolvePath::woodbury;
    check_direction(newton_step(plq, st, wood), newton_step(plq, st, direct),
                    1e-8);
  }
}

TEST_CASE("starting iterate protocol") {
  const MatrixXd A = MatrixXd::Identity(3, 3);
  const VectorXd b = VectorXd::Ones(3);
  const PlqPenalty plq = augment_l1(build_plq({0.25, 1.0}, A, b), 0.8);
  const IpState st = initial_state(plq);
  CHECK(st.x == VectorXd::Zero(3));
  CHECK(st.u == VectorXd::Zero(6));
  CHECK(st.s == plq.dense_c());
  CHECK(st.q == VectorXd::Ones(12));
  CHECK(st.barrier_mu ==
        doctest::Approx(st.s.sum() / 12.0).epsilon(1e-15));

  VectorXd warm(3);
  warm << 1.0, -2.0, 0.5;
  CHECK(initial_state(plq, warm).x == warm);
  CHECK_THROWS_AS(initial_state(plq, VectorXd::Zero(2)),
                  std::invalid_argument);
}

TEST_CASE("solver reproduces closed-form minimizers") {
  SUBCASE("intercept-only median") {
    VectorXd b(3);
    b << 1.0, 2.0, 5.0;
    const FitResult fit = solve(build_plq({0.5, 0.0}, MatrixXd::Ones(3, 1), b));
    CHECK(fit.status == SolveStatus::converged);
    CHECK(std::abs(fit.x[0] - 2.0) <= 1e-6);
    CHECK(fit.support == std::vector<int>({0}));
    CHECK(fit.kkt_residual <= 1e-8);
  }
  SUBCASE("scalar smoothed soft-thresholding") {
    const PlqPenalty plq = augment_l1(
        build_plq({0.5, 1.0}, MatrixXd::Ones(1, 1), VectorXd::Constant(1, 0.3)),
        0.1);
    const FitResult fit = solve(plq);
    CHECK(fit.status == SolveStatus::converged);
    CHECK(std::abs(fit.x[0] - 0.2) <= 1e-6);
  }
  SUBCASE("least squares at the interpolant") {
    VectorXd b(2);
    b << 1.0, 2.0;
    const FitResult fit = solve(build_l2_plq(MatrixXd::Identity(2, 2), b));
    CHECK(fit.status == SolveStatus::converged);
    CHECK(std::abs(fit.x[0] - 1.0) <= 1e-6);
    CHECK(std::abs(fit.x[1] - 2.0) <= 1e-6);
  }
}

TEST_CASE("intercept fits match the order-statistic oracle") {
  Rng rng(353);
  const int n = 21;
  for (double tau : {0.25, 0.5, 0.75}) {
    for (int seed = 0; seed < 5; ++seed) {
      Rng data(Rng::derive(353, static_cast<std::uint64_t>(seed),
                           static_cast<std::uint64_t>(tau * 100)));
      VectorXd b(n);
      for (int i = 0; i < n; ++i) b[i] = 3.0 * data.gaussian();
      // any minimizer of the separable check loss sits at a data point
      double best_x = b[0];
      double best_val = eval_quantile_check((b.array() - b[0]).matrix(), tau);
      for (int i = 1; i < n; ++i) {
        const double val =
            eval_quantile_check((b.array() - b[i]).matrix(), tau);
        if (val < best_val) {
          best_val = val;
          best_x = b[i];
        }
      }
      const FitResult fit =
          solve(build_plq({tau, 0.0}, MatrixXd::Ones(n, 1), b));
      CHECK(fit.status == SolveStatus::converged);
      CHECK(std::abs(fit.x[0] - best_x) <= 1e-5);
    }
  }
  (void)rng;
}

TEST_CASE("pure quantile optimum interpolates data points") {
  Rng rng(359);
  for (int trial = 0; trial < 8; ++trial) {
    const int n = 5 + static_cast<int>(rng.next_u64() % 4);
    const int p = 1 + static_cast<int>(rng.next_u64() % 2);
    const double tau = trial % 2 == 0 ? 0.5 : 0.3;
    const MatrixXd A = random_matrix(rng, n, p);
    const VectorXd b = random_vector(rng, n);

    double oracle = std::numeric_limits<double>::infinity();
    if (p == 1) {
      for (int i = 0; i < n; ++i) {
        if (std::abs(A(i, 0)) < 1e-12) continue;
        const VectorXd x = VectorXd::Constant(1, b[i] / A(i, 0));
        oracle = std::min(oracle, eval_quantile_check(b - A * x, tau));
      }
    } else {
      for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
          MatrixXd S(2, 2);
          S.row(0) = A.row(i);
          S.row(1) = A.row(j);
          if (std::abs(S.determinant()) < 1e-10) continue;
          VectorXd rhs(2);
          rhs << b[i], b[j];
          const VectorXd x = S.fullPivLu().solve(rhs);
          oracle = std::min(oracle, eval_quantile_check(b - A * x, tau));
        }
    }

    const FitResult fit = solve(build_plq({tau, 0.0}, A, b));
    CHECK(fit.status == SolveStatus::converged);
    CHECK(std::abs(fit.objective - oracle) <= 1e-6 * std::max(1.0, oracle));
  }
}

TEST_CASE("residual trace is monotone and ends superlinearly") {
  Rng rng(367);
  for (int trial = 0; trial < 10; ++trial) {
    const MatrixXd A = random_matrix(rng, 30, 5);
    const VectorXd b = random_vector(rng, 30);
    const double kappa = trial % 2 == 0 ? 1.5 : 0.0;
    const PlqPenalty plq = trial % 3 == 0
                               ? augment_l1(build_plq({0.4, kappa}, A, b), 0.3)
                               : build_plq({0.4, kappa}, A, b);
    const FitResult fit = solve(plq);
    REQUIRE(fit.status == SolveStatus::converged);
    for (std::size_t k = 1; k < fit.residual_trace.size(); ++k)
      CHECK(fit.residual_trace[k] <= fit.residual_trace[k - 1]);
  }

  // well-conditioned smooth instance: Newton tail contracts fast
  const MatrixXd A = random_matrix(rng, 30, 5);
  const VectorXd b = random_vector(rng, 30);
  const FitResult fit = solve(build_plq({0.5, 1.5}, A, b));
  REQUIRE(fit.status == SolveStatus::converged);
  const auto& tr = fit.residual_trace;
  REQUIRE(tr.size() >= 4);
  const std::size_t L = tr.size();
  CHECK(tr[L - 2] >= 5.0 * tr[L - 1]);
  CHECK(tr[L - 3] >= 5.0 * tr[L - 2]);
}

TEST_CASE("heavy l1 weight zeroes the fit") {
  Rng rng(373);
  for (int trial = 0; trial < 6; ++trial) {
    const MatrixXd A = random_matrix(rng, 15, 6);
    const VectorXd b = random_vector(rng, 15);
    const QuantileSpec spec{0.3, 1.0};
    const double lmax = l1_lambda_max(A, b, spec);
    const FitResult fit = solve(augment_l1(build_plq(spec, A, b), 1.5 * lmax));
    CHECK(fit.status == SolveStatus::converged);
    CHECK(fit.x.lpNorm<Eigen::Infinity>() <= 1e-7);
    CHECK(fit.support.empty());
  }
}

TEST_CASE("refitting on a column subset") {
  const PlqBuilder qh_builder = [](const MatrixXd& A, const VectorXd& b) {
    return build_plq({0.5, 0.5}, A, b);
  };
  Rng rng(379);
  SUBCASE("full support equals the unrestricted solve") {
    const MatrixXd A = random_matrix(rng, 12, 3);
    const VectorXd b = random_vector(rng, 12);
    const FitResult full = solve(build_plq({0.5, 0.5}, A, b));
    const FitResult refit = refit_on_support(qh_builder, A, b, {0, 1, 2});
    REQUIRE(refit.status == SolveStatus::converged);
    CHECK((full.x - refit.x).lpNorm<Eigen::Infinity>() <= 1e-6);
  }
  SUBCASE("single-column exact fit") {
    MatrixXd A = MatrixXd::Identity(5, 3);
    const VectorXd b = 3.0 * A.col(1);
    const FitResult refit = refit_on_support(qh_builder, A, b, {1});
    REQUIRE(refit.status == SolveStatus::converged);
    CHECK(std::abs(refit.x[1] - 3.0) <= 1e-6);
    CHECK(refit.x[0] == 0.0);
    CHECK(refit.x[2] == 0.0);
  }
  SUBCASE("wrong support costs loss") {
    const MatrixXd A = random_matrix(rng, 20, 6);
    const VectorXd b = A.col(0) * 2.0 + A.col(1) * -1.5;
    const FitResult good = refit_on_support(qh_builder, A, b, {0, 1});
    const FitResult bad = refit_on_support(qh_builder, A, b, {4, 5});
    CHECK(good.objective < bad.objective);
  }
  SUBCASE("oversized support still attempted, with a warning") {
    const MatrixXd A = random_matrix(rng, 2, 4);
    const VectorXd b = random_vector(rng, 2);
    const FitResult fit = refit_on_support(qh_builder, A, b, {0, 1, 2});
    CHECK_FALSE(fit.warning.empty());
  }
  SUBCASE("bad indices rejected") {
    const MatrixXd A = random_matrix(rng, 5, 2);
    const VectorXd b = random_vector(rng, 5);
    CHECK_THROWS_AS(refit_on_support(qh_builder, A, b, {2}),
                    std::invalid_argument);
    CHECK_THROWS_AS(refit_on_support(qh_builder, A, b, {0, 0}),
                    std::invalid_argument);
  }
}

TEST_CASE("small-dimension route cost grows linearly in width") {
  Rng rng(383);
  const int n = 300;
  std::vector<double> times;
  for (int p : {200, 400, 800}) {
    const MatrixXd A = random_matrix(rng, n, p);
    const VectorXd b = random_vector(rng, n);
    const PlqPenalty plq = augment_l1(build_plq({0.5, 1.0}, A, b), 0.4);
    times.push_back(median_step_seconds(plq, 7));
  }
  for (std::size_t k = 1; k < times.size(); ++k) {
    const double ratio = times[k] / times[k - 1];
    CHECK(ratio >= 1.3);
    CHECK(ratio <= 3.2);
  }
}
