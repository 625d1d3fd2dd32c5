#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <limits>

#include "oracle/dense_qp.hpp"
#include "paramqp/canon/canonicalize.hpp"
#include "paramqp/canon/maps.hpp"
#include "paramqp/solver/admm.hpp"
#include "paramqp/zoo/nnls.hpp"
#include "support.hpp"

using namespace paramqp;
using namespace testing_support;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

QpData scalar_qp() {
  QpData d;
  d.P = build_csc(std::vector<Triplet>{{0, 0, 2.0}}, 1, 1);
  d.q = {-2.0};
  d.A = build_csc(std::vector<Triplet>{{0, 0, 1.0}}, 1, 1);
  d.l = {0.0};
  d.u = {kInf};
  return d;
}

Settings tight(double eps = 1e-10) {
  Settings s;
  s.eps_abs = eps;
  s.eps_rel = eps;
  s.max_iter = 200000;
  return s;
}

// Random strictly feasible QP with n variables and m two-sided rows plus a few equalities.
QpData random_qp(std::mt19937_64& rng, Index n, Index m, Index meq) {
  const auto F = random_csc(rng, n, n, 0.5);
  Eigen::MatrixXd Fd = Eigen::Map<const Eigen::MatrixXd>(to_dense(F).data(), n, n);
  Eigen::MatrixXd Pd = Fd.transpose() * Fd + 0.1 * Eigen::MatrixXd::Identity(n, n);
  std::vector<Triplet> pt;
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i <= j; ++i)
      if (Pd(i, j) != 0.0) pt.push_back({i, j, Pd(i, j)});
  QpData d;
  d.P = build_csc(pt, n, n);
  d.q = randn(rng, static_cast<std::size_t>(n));
  d.A = random_csc(rng, m + meq, n, 0.4);
  const auto x0 = randn(rng, static_cast<std::size_t>(n), 0.3);
  const auto Ax0 = spmv(d.A, x0);
  d.l.resize(static_cast<std::size_t>(m + meq));
  d.u.resize(static_cast<std::size_t>(m + meq));
  const auto slack = uniform(rng, static_cast<std::size_t>(m), 0.05, 1.0);
  for (Index i = 0; i < m; ++i) {
    d.l[i] = (i % 3 == 0) ? -kInf : Ax0[i] - slack[i];
    d.u[i] = (i % 3 == 1) ? kInf : Ax0[i] + slack[i];
  }
  for (Index i = m; i < m + meq; ++i) d.l[i] = d.u[i] = Ax0[i];
  return d;
}

oracle::DenseQP to_dense_qp(const QpData& d) {
  const Index n = d.P.ncols, m = d.A.nrows;
  Eigen::MatrixXd U = Eigen::Map<const Eigen::MatrixXd>(to_dense(d.P).data(), n, n);
  Eigen::MatrixXd P = U + U.transpose();
  P.diagonal() = U.diagonal();
  Eigen::MatrixXd A = Eigen::Map<const Eigen::MatrixXd>(to_dense(d.A).data(), m, n);
  return oracle::from_bounds(P, Eigen::Map<const Eigen::VectorXd>(d.q.data(), n), A,
                             Eigen::Map<const Eigen::VectorXd>(d.l.data(), m),
                             Eigen::Map<const Eigen::VectorXd>(d.u.data(), m));
}
}  // namespace

TEST(Settings, Defaults) {
  const Settings s;
  EXPECT_EQ(s.rho, 0.1);
  EXPECT_EQ(s.sigma, 1e-6);
  EXPECT_EQ(s.alpha, 1.6);
  EXPECT_EQ(s.eps_abs, 1e-5);
  EXPECT_EQ(s.eps_rel, 1e-5);
  EXPECT_EQ(s.max_iter, 20000);
  EXPECT_EQ(s.check_interval, 25);
  Settings bad;
  bad.alpha = 2.0;
  EXPECT_THROW(bad.validate(), SolverError);
}

TEST(Setup, ScalarCalculus) {
  SolverWorkspace ws(scalar_qp());
  const auto sol = ws.solve();
  EXPECT_EQ(sol.status, Status::solved);
  EXPECT_NEAR(sol.x_tilde[0], 1.0, 1e-4);
  EXPECT_EQ(ws.factorizations(), 1);
}

TEST(Setup, RejectsCrossedBounds) {
  auto d = scalar_qp();
  d.l = {2.0};
  d.u = {1.0};
  EXPECT_THROW(SolverWorkspace ws(d), SolverError);
}

TEST(Setup, RejectsBadDimensions) {
  auto d = scalar_qp();
  d.q = {1.0, 2.0};
  EXPECT_THROW(SolverWorkspace ws(d), DimensionError);
}

TEST(Solve, ProjectionOntoOrthant) {
  const auto f = zoo::build_nnls(2, 2);
  const auto c = canonicalize(f.problem);
  // G = I, h = (1, -1)
  const auto tt = eval_params(c.cmap, DenseVec{1, 0, 0, 1, 1, -1});
  const auto sol = solve_qp(c.qp.unpack(tt));
  ASSERT_EQ(sol.status, Status::solved);
  const auto x = retrieve(c.rmap, sol.x_tilde);
  EXPECT_NEAR(x[0], 1.0, 1e-5);
  EXPECT_NEAR(x[1], 0.0, 1e-5);
}

TEST(Solve, EqualityRowsWithInfiniteUpperBound) {
  const auto c = canonicalize(zoo::build_nnls(1, 1).problem);
  const auto data = c.qp.unpack(eval_params(c.cmap, DenseVec{1.0, 1.0}));
  ASSERT_EQ(data.l[0], data.u[0]);
  ASSERT_EQ(data.u[1], kInf);
  const auto sol = solve_qp(data);
  ASSERT_EQ(sol.status, Status::solved);
  EXPECT_NEAR(sol.x_tilde[0], 1.0, 1e-5);
}

TEST(Solve, ResolveTerminatesWithinOneCheckInterval) {
  std::mt19937_64 rng(31);
  SolverWorkspace ws(random_qp(rng, 8, 6, 2));
  ASSERT_EQ(ws.solve().status, Status::solved);
  const auto again = ws.solve();
  EXPECT_EQ(again.status, Status::solved);
  EXPECT_LE(again.iterations, ws.settings().check_interval);
}

TEST(Solve, Deterministic) {
  std::mt19937_64 rng(32);
  const auto d = random_qp(rng, 10, 8, 2);
  const auto a = solve_qp(d), b = solve_qp(d);
  EXPECT_EQ(a.x_tilde, b.x_tilde);
  EXPECT_EQ(a.y, b.y);
  EXPECT_EQ(a.iterations, b.iterations);
}

TEST(Solve, TerminationBoundsHold) {
  std::mt19937_64 rng(33);
  for (int trial = 0; trial < 10; ++trial) {
    const auto d = random_qp(rng, 9, 7, 1);
    SolverWorkspace ws(d);
    const auto s = ws.solve();
    ASSERT_EQ(s.status, Status::solved);
    const auto Ax = spmv(d.A, s.x_tilde);
    DenseVec z(Ax.size());
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = std::clamp(Ax[i], d.l[i], d.u[i]);
    // z is the projection of the returned iterate; the primal residual certificate is on (Ax, z).
    EXPECT_LE(s.primal_res, ws.settings().eps_abs + ws.settings().eps_rel * std::max(max_abs(Ax), max_abs(z)) + 1e-12);
    DenseVec Px(d.q.size()), Aty(d.q.size());
    spmv_sym_upper_into(d.P, s.x_tilde, Px);
    spmv_transpose_into(d.A, s.y, Aty);
    DenseVec r(d.q.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = Px[i] + d.q[i] + Aty[i];
    EXPECT_NEAR(max_abs(r), s.dual_res, 1e-15);
    EXPECT_LE(s.dual_res, ws.settings().eps_abs +
                              ws.settings().eps_rel * std::max({max_abs(Px), max_abs(Aty), max_abs(d.q)}) + 1e-12);
  }
}

TEST(Solve, MatchesDenseOracleOnRandomInstances) {
  std::mt19937_64 rng(34);
  for (int trial = 0; trial < 50; ++trial) {
    const auto d = random_qp(rng, 4 + trial % 8, 3 + trial % 5, trial % 3);
    const auto sol = solve_qp(d, tight(1e-9));
    ASSERT_EQ(sol.status, Status::solved) << trial;
    const auto dq = to_dense_qp(d);
    const auto ref = oracle::solve_dense(dq);
    ASSERT_TRUE(ref.converged);
    const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(sol.x_tilde.data(), d.P.ncols);
    EXPECT_LE(std::abs(dq.objective(x) - ref.objective), 1e-5 * std::max(1.0, std::abs(ref.objective)));
    EXPECT_LT(dq.violation(x), 1e-6);
  }
}

TEST(Solve, PrimalInfeasibleCertificate) {
  // x <= -1 and x >= 1
  QpData d;
  d.P = build_csc(std::vector<Triplet>{{0, 0, 1.0}}, 1, 1);
  d.q = {0.0};
  d.A = build_csc(std::vector<Triplet>{{0, 0, 1.0}, {1, 0, 1.0}}, 2, 1);
  d.l = {-kInf, 1.0};
  d.u = {-1.0, kInf};
  EXPECT_EQ(solve_qp(d).status, Status::primal_infeasible);
}

TEST(Solve, DualInfeasibleCertificate) {
  // minimize -x  s.t.  x >= 0
  QpData d;
  d.P = CscMatrix(1, 1);
  d.q = {-1.0};
  d.A = build_csc(std::vector<Triplet>{{0, 0, 1.0}}, 1, 1);
  d.l = {0.0};
  d.u = {kInf};
  EXPECT_EQ(solve_qp(d).status, Status::dual_infeasible);
}

TEST(UpdateVectors, MatchesFreshSetup) {
  std::mt19937_64 rng(35);
  for (int trial = 0; trial < 10; ++trial) {
    auto d = random_qp(rng, 8, 6, 2);
    SolverWorkspace ws(d, tight());
    ASSERT_EQ(ws.solve().status, Status::solved);
    const auto q2 = randn(rng, d.q.size());
    ws.update_vectors(std::span<const double>(q2), std::nullopt, std::nullopt);
    const auto warm = ws.solve();
    d.q = q2;
    const auto cold = solve_qp(d, tight());
    ASSERT_EQ(warm.status, Status::solved);
    EXPECT_LE(std::abs(warm.objective - cold.objective), 1e-8 * std::max(1.0, std::abs(cold.objective)));
    EXPECT_LT(max_abs_diff(warm.x_tilde, cold.x_tilde), 1e-7);
    EXPECT_EQ(ws.factorizations(), 1);
  }
}

TEST(UpdateVectors, IdenticalValuesKeepTrajectory) {
  std::mt19937_64 rng(36);
  const auto d = random_qp(rng, 8, 6, 2);
  SolverWorkspace a(d), b(d);
  a.solve();
  b.solve();
  a.update_vectors(std::span<const double>(d.q), std::span<const double>(d.l), std::span<const double>(d.u));
  const auto sa = a.solve(), sb = b.solve();
  EXPECT_EQ(sa.x_tilde, sb.x_tilde);
  EXPECT_EQ(sa.iterations, sb.iterations);
}

TEST(UpdateVectors, RejectsBadInput) {
  SolverWorkspace ws(scalar_qp());
  const DenseVec two{1.0, 2.0}, lo{5.0};
  EXPECT_THROW(ws.update_vectors(std::span<const double>(two), std::nullopt, std::nullopt), DimensionError);
  const DenseVec hi{4.0};
  EXPECT_THROW(ws.update_vectors(std::nullopt, std::span<const double>(lo), std::span<const double>(hi)), SolverError);
}

TEST(UpdateMatrix, IdenticalValuesLeaveSolutionUnchanged) {
  std::mt19937_64 rng(37);
  const auto d = random_qp(rng, 8, 6, 2);
  SolverWorkspace a(d), b(d);
  a.solve();
  b.solve();
  a.update_matrix_values(std::span<const double>(d.P.values), std::span<const double>(d.A.values));
  EXPECT_EQ(a.factorizations(), 2);
  const auto sa = a.solve(), sb = b.solve();
  EXPECT_LT(max_abs_diff(sa.x_tilde, sb.x_tilde), 1e-12);
}

TEST(UpdateMatrix, MatchesFreshSetup) {
  std::mt19937_64 rng(38);
  for (int trial = 0; trial < 10; ++trial) {
    auto d = random_qp(rng, 8, 6, 0);
    SolverWorkspace ws(d, tight());
    ws.solve();
    auto Av = d.A.values;
    for (auto& v : Av) v *= 1.0 + 0.1 * std::normal_distribution<double>()(rng);
    ws.update_matrix_values(std::nullopt, std::span<const double>(Av));
    const auto warm = ws.solve();
    d.A.values = Av;
    // Keep the instance feasible: widen every finite bound.
    const auto cold = solve_qp(d, tight());
    ASSERT_EQ(warm.status, cold.status);
    if (cold.status != Status::solved) continue;
    EXPECT_LE(std::abs(warm.objective - cold.objective), 1e-8 * std::max(1.0, std::abs(cold.objective)));
  }
}

TEST(UpdateMatrix, IndefinitePIsBreakdown) {
  SolverWorkspace ws(scalar_qp());
  const DenseVec neg{-1.0};
  EXPECT_THROW(ws.update_matrix_values(std::span<const double>(neg), std::nullopt), SolverError);
}

TEST(UpdateMatrix, RejectsPatternMismatch) {
  SolverWorkspace ws(scalar_qp());
  const DenseVec two{1.0, 1.0};
  EXPECT_THROW(ws.update_matrix_values(std::nullopt, std::span<const double>(two)), DimensionError);
}

TEST(LdlSolve, ZeroRhs) {
  std::mt19937_64 rng(39);
  SolverWorkspace ws(random_qp(rng, 6, 4, 0));
  const auto x = ws.ldl_solve(DenseVec(10, 0.0));
  EXPECT_EQ(max_abs(x), 0.0);
}

TEST(LdlSolve, ResidualAndInverse) {
  std::mt19937_64 rng(40);
  for (int trial = 0; trial < 10; ++trial) {
    SolverWorkspace ws(random_qp(rng, 6, 4, 0));
    const auto Ku = ws.kkt_matrix();
    Eigen::MatrixXd U = Eigen::Map<const Eigen::MatrixXd>(to_dense(Ku).data(), 10, 10);
    Eigen::MatrixXd K = U + U.transpose();
    K.diagonal() = U.diagonal();
    const auto b = randn(rng, 10);
    const auto x = ws.ldl_solve(b);
    const Eigen::VectorXd r = K * Eigen::Map<const Eigen::VectorXd>(x.data(), 10) - Eigen::Map<const Eigen::VectorXd>(b.data(), 10);
    EXPECT_LT(r.cwiseAbs().maxCoeff(), 1e-10);
    Eigen::MatrixXd Kinv(10, 10);
    for (int i = 0; i < 10; ++i) {
      DenseVec e(10, 0.0);
      e[i] = 1.0;
      const auto col = ws.ldl_solve(e);
      for (int k = 0; k < 10; ++k) Kinv(k, i) = col[k];
    }
    EXPECT_LT((K * Kinv - Eigen::MatrixXd::Identity(10, 10)).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Ordering, IsPermutationAndReducesFill) {
  // Arrow matrix: dense first row/column. Eliminating the hub first fills everything.
  const Index n = 30;
  std::vector<Triplet> t;
  for (Index j = 0; j < n; ++j) {
    t.push_back({j, j, 4.0});
    if (j > 0) t.push_back({0, j, 1.0});
  }
  const auto K = build_csc(t, n, n);
  const auto perm = solver::minimum_degree_order(K);
  std::vector<Index> sorted = perm;
  std::sort(sorted.begin(), sorted.end());
  for (Index k = 0; k < n; ++k) EXPECT_EQ(sorted[k], k);
  EXPECT_NE(perm.front(), 0);
  const auto pinv = solver::inverse_permutation(perm);
  std::vector<Triplet> tp;
  for (const auto& e : t) tp.push_back({std::min(pinv[e.row], pinv[e.col]), std::max(pinv[e.row], pinv[e.col]), e.value});
  const solver::LdlFactor f(build_csc(tp, n, n));
  EXPECT_EQ(f.nnz_L(), n - 1);
}
