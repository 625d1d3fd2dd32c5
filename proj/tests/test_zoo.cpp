#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <numbers>

#include "family_support.hpp"
#include "oracle/active_set.hpp"
#include "paramqp/dsl/dpp.hpp"
#include "paramqp/zoo/nnls.hpp"
#include "support.hpp"

using namespace paramqp;
using namespace paramqp::zoo;
using namespace testing_support;

namespace {

Eigen::MatrixXd random_stable(std::mt19937_64& rng, int n, double radius) {
  std::normal_distribution<double> g;
  Eigen::MatrixXd A(n, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) A(i, j) = g(rng);
  const double rho = A.eigenvalues().cwiseAbs().maxCoeff();
  return A * (radius / rho);
}

DenseVec vec(const Eigen::VectorXd& v) { return DenseVec(v.data(), v.data() + v.size()); }

}  // namespace

// ---- DARE ----

TEST(Dare, ZeroDynamicsGivesQ) {
  const Eigen::MatrixXd A = Eigen::MatrixXd::Zero(3, 3);
  const Eigen::MatrixXd B = Eigen::MatrixXd::Identity(3, 2);
  const Eigen::MatrixXd Q = Eigen::Vector3d(1, 2, 3).asDiagonal();
  const Eigen::MatrixXd R = Eigen::MatrixXd::Identity(2, 2);
  EXPECT_LT((solve_dare(A, B, Q, R) - Q).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Dare, ScalarGoldenRatio) {
  const Eigen::MatrixXd one = Eigen::MatrixXd::Ones(1, 1);
  // P^2 = P + 1, solved independently by bisection on [1, 2].
  double lo = 1.0, hi = 2.0;
  for (int k = 0; k < 200; ++k) {
    const double mid = 0.5 * (lo + hi);
    (mid * mid - mid - 1.0 < 0 ? lo : hi) = mid;
  }
  const double P = solve_dare(one, one, one, one)(0, 0);
  EXPECT_NEAR(P, 0.5 * (lo + hi), 1e-9);
  EXPECT_NEAR(P, 0.5 * (1.0 + std::sqrt(5.0)), 1e-9);
}

TEST(Dare, RandomStableResidual) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::MatrixXd A = random_stable(rng, 6, 0.95);
    Eigen::MatrixXd B(6, 3);
    std::normal_distribution<double> g;
    for (int j = 0; j < 3; ++j)
      for (int i = 0; i < 6; ++i) B(i, j) = g(rng);
    const Eigen::MatrixXd Q = Eigen::VectorXd::LinSpaced(6, 1, 6).asDiagonal();
    const Eigen::MatrixXd R = Eigen::Vector3d(0.5, 1, 2).asDiagonal();
    const Eigen::MatrixXd P = solve_dare(A, B, Q, R);
    EXPECT_LT((P - dare_rhs(P, A, B, Q, R)).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_GT(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(P).eigenvalues().minCoeff(), 0.0);
  }
}

TEST(Dare, UnstabilizableDoesNotConverge) {
  const Eigen::MatrixXd A = 2.0 * Eigen::MatrixXd::Ones(1, 1);
  const Eigen::MatrixXd B = Eigen::MatrixXd::Zero(1, 1);
  const Eigen::MatrixXd one = Eigen::MatrixXd::Ones(1, 1);
  EXPECT_THROW(solve_dare(A, B, one, one, 1e-10, 200), SolverError);
}

TEST(Dare, DimensionMismatch) {
  EXPECT_THROW(solve_dare(Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Zero(3, 1), Eigen::MatrixXd::Zero(2, 2),
                          Eigen::MatrixXd::Zero(1, 1)),
               DimensionError);
}

// ---- NNLS ----

TEST(Nnls, ZeroDataGivesZero) {
  const auto f = build_nnls(3, 2);
  ParametricSolver ps(f.problem, tight_settings());
  ps.set(f.G, DenseVec(6, 0.0));
  ps.set(f.h, DenseVec(3, 0.0));
  EXPECT_EQ(ps.solve().status, Status::solved);
  EXPECT_LE(max_abs(ps.value(f.x)), 1e-9);
}

TEST(Nnls, MatchesActiveSetEnumeration) {
  std::mt19937_64 rng(5);
  const auto f = build_nnls(5, 3);
  ParametricSolver ps(f.problem, tight_settings(1e-10));
  for (int trial = 0; trial < 30; ++trial) {
    const auto G = randn(rng, 15);
    const auto h = randn(rng, 5);
    ps.set(f.G, G);
    ps.set(f.h, h);
    ASSERT_EQ(ps.solve().status, Status::solved);
    const auto ref = oracle::nnls_enumerate(Eigen::Map<const Eigen::MatrixXd>(G.data(), 5, 3),
                                            Eigen::Map<const Eigen::VectorXd>(h.data(), 5));
    EXPECT_LT(rel_err(ps.user_objective(), ref.objective), 1e-7);
    const auto x = ps.value(f.x);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(x[i], ref.x[i], 1e-6);
  }
}

TEST(Nnls, RejectsBadDimensions) {
  EXPECT_THROW(build_nnls(0, 2), DimensionError);
  EXPECT_THROW(build_nnls(2, 0), DimensionError);
}

// ---- pipeline ----

TEST(Pipeline, CachedPathMatchesFromScratch) {
  std::mt19937_64 rng(8);
  const auto f = build_nnls(6, 4);
  const auto s = tight_settings(1e-10);
  ParametricSolver ps(f.problem, s);
  for (int trial = 0; trial < 10; ++trial) {
    if (trial % 3 == 0 || trial == 0) ps.set(f.G, randn(rng, 24));
    ps.set(f.h, randn(rng, 6));
    ps.solve();
    DenseVec ref;
    solve_from_scratch(f.problem, ps.theta(), s, &ref);
    EXPECT_LT(max_abs_diff(ps.x(), ref), 1e-7);
    // theta_tilde after partial updates equals a full evaluation, bit for bit.
    EXPECT_EQ(ps.theta_tilde(), eval_params(ps.canonical().cmap, ps.theta()));
  }
}

TEST(Pipeline, VectorOnlyUpdatesKeepFactorization) {
  const auto f = build_nnls(3, 2);
  ParametricSolver ps(f.problem);
  ps.set(f.G, DenseVec{1, 0, 0, 0, 1, 0});
  ps.set(f.h, DenseVec{1, -1, 0});
  ps.solve();
  EXPECT_EQ(ps.factorizations(), 1);
  for (int k = 0; k < 5; ++k) {
    ps.set(f.h, DenseVec{1.0 + k, -1, 0.5});
    ps.solve();
    EXPECT_FALSE(ps.last_refactorized());
    // h sits in equality rows, so both bound vectors move.
    EXPECT_EQ(ps.last_touched(), (std::vector<Segment>{Segment::l, Segment::u}));
  }
  EXPECT_EQ(ps.factorizations(), 1);
  ps.set(f.G, DenseVec{2, 0, 0, 0, 1, 0});
  ps.solve();
  EXPECT_TRUE(ps.last_refactorized());
  EXPECT_EQ(ps.factorizations(), 2);
}

TEST(Pipeline, SetByNameAndUnknownName) {
  const auto f = build_nnls(1, 1);
  ParametricSolver ps(f.problem);
  ps.set("G", DenseVec{1.0});
  ps.set("h", DenseVec{2.0});
  ps.solve();
  EXPECT_NEAR(ps.value(f.x)[0], 2.0, 1e-4);
  EXPECT_THROW(ps.set("Q", DenseVec{1.0}), SymbolError);
  EXPECT_THROW(ps.set("G", DenseVec{1.0, 2.0}), DimensionError);
}

// ---- MPC ----

TEST(Mpc, StructureAndDpp) {
  const auto f = build_mpc(6);
  EXPECT_TRUE(check_dpp(f.problem).compliant);
  EXPECT_EQ(f.problem.variable_size(), 9 * 7);
  EXPECT_EQ(f.d->shape, (Shape{1, 5}));
  EXPECT_EQ(f.normals.size(), 8u);
  for (const auto& c : f.normals) EXPECT_NEAR(std::hypot(c[0], c[1]), 1.0, 1e-15);
  for (const Index H : {6, 12, 18, 30, 60}) {
    const double nv = static_cast<double>(build_mpc(H).problem.variable_size());
    EXPECT_GT(nv, 0.5 * 10 * H);
    EXPECT_LT(nv, 2.0 * 10 * H);
  }
  EXPECT_THROW(build_mpc(1), DimensionError);
  EXPECT_THROW(build_mpc(6, 2), DimensionError);
}

TEST(Mpc, NonDppVariantFlagsProducts) {
  const auto p = build_mpc_non_dpp(6);
  const auto r = check_dpp(p);
  EXPECT_FALSE(r.compliant);
  // Per tilt halfspace: the outer gamma * (...) product and the inner m * g.
  EXPECT_EQ(r.violations.size(), 16u);
  for (const auto& v : r.violations) {
    EXPECT_EQ(v.path.rfind("constraints[", 0), 0u);
    EXPECT_TRUE(is_product(v.node.op()));
  }
}

TEST(Mpc, DefaultsAreDocumentedValues) {
  const MpcConstants k;
  EXPECT_DOUBLE_EQ(k.mass, 0.5);
  EXPECT_DOUBLE_EQ(k.g, 9.81);
  EXPECT_NEAR(k.gamma, 1.0 / std::sqrt(3.0), 1e-15);
  EXPECT_DOUBLE_EQ(k.u_vmin(), -0.5 * 0.5 * 9.81);
  EXPECT_DOUBLE_EQ(k.u_vmax(), 0.5 * 9.81);
  const auto d = mpc_data(k);
  EXPECT_LT((d.QT - dare_rhs(d.QT, d.A, d.B, d.Q, d.R)).cwiseAbs().maxCoeff(), 1e-8);
  const auto S = sqrt_factor(d.QT);
  EXPECT_LT((S.transpose() * S - d.QT).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Mpc, OriginIsFixedPoint) {
  const auto f = build_mpc(6);
  const auto d = mpc_data(MpcConstants{});
  ParametricSolver ps(f.problem, tight_settings());
  ps.set_theta(mpc_theta(f, d, DenseVec(6, 0.0), DenseVec(3, 0.0)));
  ASSERT_EQ(ps.solve().status, Status::solved);
  EXPECT_LE(max_abs(ps.x()), 1e-8);
}

TEST(Mpc, MatchesDenseOracle) {
  std::mt19937_64 rng(21);
  const auto f = build_mpc(6);
  const auto d = mpc_data(MpcConstants{});
  ParametricSolver ps(f.problem, tight_settings());
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::VectorXd z = random_mpc_state(rng);
    const Eigen::VectorXd u = random_mpc_input(rng, d);
    ps.set(f.z_meas, vec(z));
    ps.set(f.u_prev, vec(u));
    if (trial == 0) ps.set_theta(mpc_theta(f, d, vec(z), vec(u)));
    ASSERT_EQ(ps.solve().status, Status::solved);
    const auto qp = oracle::mpc_qp(mpc_instance(f, d, z, u));
    const auto ref = oracle::solve_dense(qp);
    ASSERT_TRUE(ref.converged);
    EXPECT_LT(rel_err(ps.user_objective(), ref.objective), 1e-5);
    EXPECT_LT(ps.user_violation(), 1e-6);
    EXPECT_LT(qp.violation(Eigen::Map<const Eigen::VectorXd>(ps.x().data(), qp.n())), 1e-6);
  }
}

TEST(Mpc, EmptySimulation) {
  const auto f = build_mpc(6);
  const auto d = mpc_data(MpcConstants{});
  const auto trace = simulate_mpc(f, d, d.A, d.B, DenseVec(6, 1.0), 0);
  EXPECT_TRUE(trace.records.empty());
}

TEST(Mpc, ZeroStateStaysAtRest) {
  const auto f = build_mpc(6);
  const auto d = mpc_data(MpcConstants{});
  const auto trace = simulate_mpc(f, d, d.A, d.B, DenseVec(6, 0.0), 10, tight_settings());
  ASSERT_EQ(trace.records.size(), 10u);
  for (const auto& r : trace.records) {
    const auto U = DenseVec(r.x.begin() + 6 * 7, r.x.end());
    EXPECT_LE(max_abs(U), 1e-6);
  }
}

TEST(Mpc, ClosedLoopRegulatesWithOneFactorization) {
  std::mt19937_64 rng(3);
  const auto f = build_mpc(6);
  const auto d = mpc_data(MpcConstants{});
  const Eigen::VectorXd z0 = random_mpc_state(rng);
  const auto trace = simulate_mpc(f, d, d.A, d.B, vec(z0), 100, tight_settings(1e-8));
  ASSERT_EQ(trace.records.size(), 100u);
  EXPECT_EQ(trace.factorizations, 1);
  const auto& z50 = trace.states[50];
  EXPECT_LT(Eigen::Map<const Eigen::VectorXd>(z50.data(), 6).norm(), 1e-3 * z0.norm());
  for (std::size_t k = 0; k < trace.records.size(); ++k) {
    const auto& r = trace.records[k];
    EXPECT_EQ(r.refactorized, k == 0);
    EXPECT_LT(dynamics_residual(f, d.A, d.B, r.x), 1e-6);
    if (k > 0) {
      for (const auto s : r.touched) EXPECT_FALSE(is_matrix_segment(s));
    }
  }
}

// ---- portfolio ----

TEST(Portfolio, StructureAndDpp) {
  const auto f = build_portfolio(10);
  EXPECT_EQ(f.K, 5);
  EXPECT_EQ(build_portfolio(100).K, 10);
  EXPECT_EQ(build_portfolio(20).K, 5);
  EXPECT_TRUE(check_dpp(f.problem).compliant);
  EXPECT_EQ(f.problem.variable_size(), 22);
  EXPECT_EQ(f.problem.sense(), Sense::maximize);
  EXPECT_THROW(build_portfolio(1), DimensionError);
}

TEST(Portfolio, NonDppVariantFlagsProducts) {
  const auto r = check_dpp(build_portfolio_non_dpp(10));
  EXPECT_FALSE(r.compliant);
  // gamma_risk, gamma_tc and gamma_sh scalings, plus kappa_tc' |w - w_prev|.
  ASSERT_EQ(r.violations.size(), 4u);
  for (const auto& v : r.violations) {
    EXPECT_EQ(v.path.rfind("objective", 0), 0u);
    EXPECT_TRUE(is_product(v.node.op()));
  }
}

TEST(Portfolio, UniformMinimumNorm) {
  const Index N = 10, n = 11;
  const auto f = build_portfolio(N);
  PortfolioData d;
  d.alpha = Eigen::VectorXd::Zero(n);
  d.F = Eigen::MatrixXd::Zero(n, f.K);
  d.d_sqrt = Eigen::VectorXd::Ones(n);
  d.kappa_tc = Eigen::VectorXd::Zero(n);
  d.kappa_sh = Eigen::VectorXd::Zero(n);
  d.L = 100.0;
  d.w_prev = Eigen::VectorXd::Unit(n, N);
  ParametricSolver ps(f.problem, tight_settings());
  ps.set_theta(portfolio_theta(f, d));
  ASSERT_EQ(ps.solve().status, Status::solved);
  for (const double wi : ps.value(f.w)) EXPECT_NEAR(wi, 1.0 / 11.0, 1e-7);
}

TEST(Portfolio, MatchesDenseOracle) {
  for (const Index N : {10, 20}) {
    const auto f = build_portfolio(N);
    ParametricSolver ps(f.problem, tight_settings());
    for (int trial = 0; trial < 20; ++trial) {
      const auto d = random_portfolio_data(N, 100 + static_cast<std::uint64_t>(trial));
      ps.set_theta(portfolio_theta(f, d));
      ASSERT_EQ(ps.solve().status, Status::solved);
      const auto qp = oracle::portfolio_qp(portfolio_instance(d));
      const auto ref = oracle::solve_dense(qp);
      ASSERT_TRUE(ref.converged);
      EXPECT_LT(rel_err(ps.user_objective(), -ref.objective), 1e-5) << "N=" << N << " trial " << trial;
      EXPECT_LT(ps.user_violation(), 1e-6);
    }
  }
}

TEST(Portfolio, SinglePeriodStartsAllCash) {
  const auto f = build_portfolio(10);
  const auto trace = backtest(f, 1, 7);
  ASSERT_EQ(trace.records.size(), 1u);
  const auto& w0 = trace.states[0];
  for (int i = 0; i < 10; ++i) EXPECT_EQ(w0[i], 0.0);
  EXPECT_EQ(w0[10], 1.0);
  EXPECT_THROW(backtest(f, 0, 7), DimensionError);
}

TEST(Portfolio, BacktestIsDeterministic) {
  const auto f = build_portfolio(10);
  const auto a = backtest(f, 30, 99);
  const auto b = backtest(f, 30, 99);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t k = 0; k < a.records.size(); ++k) {
    EXPECT_EQ(a.records[k].x, b.records[k].x);
    EXPECT_EQ(a.records[k].theta, b.records[k].theta);
    EXPECT_EQ(a.records[k].iterations, b.records[k].iterations);
  }
}

TEST(Portfolio, LongBacktestFeasibleAndRefactorsEachPeriod) {
  const auto f = build_portfolio(10);
  const auto trace = backtest(f, 500, 2024);
  ASSERT_EQ(trace.records.size(), 500u);
  EXPECT_EQ(trace.factorizations, 500);
  for (const auto& r : trace.records) {
    EXPECT_EQ(r.status, Status::solved);
    EXPECT_TRUE(r.refactorized);
    const Eigen::Map<const Eigen::VectorXd> w(r.x.data(), 11);
    EXPECT_NEAR(w.sum(), 1.0, 1e-6);
    EXPECT_LE(w.lpNorm<1>(), 1.6 + 1e-6);
  }
  // Later periods touch the A block (F, D_sqrt) and the q/l/u vectors.
  const auto& t = trace.records[1].touched;
  EXPECT_NE(std::find(t.begin(), t.end(), Segment::A), t.end());
}
