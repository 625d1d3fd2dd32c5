#pragma once

// Factor-model portfolio selection over N assets plus cash (last entry),
// written with the risk aversion folded into the parameters so the problem
// stays DPP:
//
//   maximize   alpha'w - ||F'w||^2 - ||D_sqrt w||^2 - kappa_tc'|dw| - kappa_sh'(w)_-
//   subject to sum(w) = 1,  ||w||_1 <= L,  dw = w - w_prev

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <vector>

#include "paramqp/pipeline.hpp"
#include "paramqp/zoo/mpc.hpp"

namespace paramqp::zoo {

struct PortfolioFamily {
  Index N = 0;
  Index K = 0;
  Variable w;
  Variable dw;
  Parameter alpha, F, D_sqrt, kappa_tc, kappa_sh, L, w_prev;
  Problem problem;
};

inline Index factor_count(Index N) { return std::max<Index>(N / 10, 5); }

inline PortfolioFamily build_portfolio(Index N) {
  if (N < 2) throw DimensionError("build_portfolio: need at least 2 assets");
  PortfolioFamily f;
  f.N = N;
  f.K = factor_count(N);
  const Index n = N + 1;
  f.w = make_variable("w", {n, 1});
  f.dw = make_variable("dw", {n, 1});
  f.alpha = make_parameter("alpha", {n, 1});
  f.F = make_parameter("F", {n, f.K});
  f.D_sqrt = make_parameter("D_sqrt", {n, n}, Sign::nonneg, diagonal_pattern(n));
  f.kappa_tc = make_parameter("kappa_tc", {n, 1}, Sign::nonneg);
  f.kappa_sh = make_parameter("kappa_sh", {n, 1}, Sign::nonneg);
  f.L = make_parameter("L", {1, 1}, Sign::nonneg);
  f.w_prev = make_parameter("w_prev", {n, 1});
  const Expr w = f.w, dw = f.dw;
  const Expr objective = matmul(transpose(f.alpha), w) - sum_squares(matmul(transpose(f.F), w)) -
                         sum_squares(matmul(f.D_sqrt, w)) - matmul(transpose(f.kappa_tc), abs(dw)) -
                         matmul(transpose(f.kappa_sh), neg_part(w));
  f.problem = Problem(Sense::maximize, objective, {eq(sum(w), 1.0), le(norm1(w), f.L), eq(dw, w - f.w_prev)},
                      {f.w, f.dw}, {f.alpha, f.F, f.D_sqrt, f.kappa_tc, f.kappa_sh, f.L, f.w_prev}, "portfolio");
  return f;
}

// The original scaling with separate gamma weights and Sigma entering through
// gamma_risk * (...): parameter products make it fail check_dpp.
inline Problem build_portfolio_non_dpp(Index N) {
  if (N < 2) throw DimensionError("build_portfolio_non_dpp: need at least 2 assets");
  const Index n = N + 1;
  const Index K = factor_count(N);
  const auto w = make_variable("w", {n, 1});
  const auto alpha = make_parameter("alpha", {n, 1});
  const auto F = make_parameter("F", {n, K});
  const auto D_sqrt = make_parameter("D_sqrt", {n, n}, Sign::nonneg, diagonal_pattern(n));
  const auto kappa_tc = make_parameter("kappa_tc", {n, 1}, Sign::nonneg);
  const auto kappa_sh = make_parameter("kappa_sh", {n, 1}, Sign::nonneg);
  const auto g_risk = make_parameter("gamma_risk", {1, 1}, Sign::nonneg);
  const auto g_tc = make_parameter("gamma_tc", {1, 1}, Sign::nonneg);
  const auto g_sh = make_parameter("gamma_sh", {1, 1}, Sign::nonneg);
  const auto L = make_parameter("L", {1, 1}, Sign::nonneg);
  const auto w_prev = make_parameter("w_prev", {n, 1});
  const Expr W = w;
  const Expr objective =
      matmul(transpose(alpha), W) -
      Expr(g_risk) * (sum_squares(matmul(transpose(F), W)) + sum_squares(matmul(D_sqrt, W))) -
      Expr(g_tc) * matmul(transpose(kappa_tc), abs(W - w_prev)) - Expr(g_sh) * matmul(transpose(kappa_sh), neg_part(W));
  return Problem(Sense::maximize, objective, {eq(sum(W), 1.0), le(norm1(W), L)}, {w},
                 {alpha, F, D_sqrt, kappa_tc, kappa_sh, g_risk, g_tc, g_sh, L, w_prev}, "portfolio_non_dpp");
}

// Dense parameter values for one period. Returns are in percent.
struct PortfolioData {
  Eigen::VectorXd alpha;
  Eigen::MatrixXd F;
  Eigen::VectorXd d_sqrt;  // diagonal of D_sqrt
  Eigen::VectorXd kappa_tc;
  Eigen::VectorXd kappa_sh;
  double L = 1.6;
  Eigen::VectorXd w_prev;
};

inline Assignment portfolio_assignment(const PortfolioFamily& f, const PortfolioData& d) {
  Assignment a;
  a.set(f.alpha, col_major(d.alpha));
  a.set(f.F, col_major(d.F));
  a.set(f.D_sqrt, col_major(Eigen::MatrixXd(d.d_sqrt.asDiagonal())));
  a.set(f.kappa_tc, col_major(d.kappa_tc));
  a.set(f.kappa_sh, col_major(d.kappa_sh));
  a.set(f.L, {d.L});
  a.set(f.w_prev, col_major(d.w_prev));
  return a;
}

inline DenseVec portfolio_theta(const PortfolioFamily& f, const PortfolioData& d) {
  return flatten_parameters(f.problem, portfolio_assignment(f, d));
}

// Synthetic market: r = B f + e with i.i.d. Gaussian factor returns f,
// idiosyncratic noise e and a small per-asset drift. Cash returns zero.
class SyntheticMarket {
 public:
  SyntheticMarket(Index N, Index K, std::uint64_t seed) : N_(N), K_(K), rng_(seed) {
    std::normal_distribution<double> nd(0.0, 1.0);
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    loadings_ = Eigen::MatrixXd::Zero(N + 1, K);
    idio_ = Eigen::VectorXd::Zero(N + 1);
    drift_ = Eigen::VectorXd::Zero(N + 1);
    factor_vol_ = Eigen::VectorXd::Zero(K);
    for (Index k = 0; k < K; ++k) factor_vol_[k] = 0.5 + 0.5 * ud(rng_);
    for (Index i = 0; i < N; ++i) {
      for (Index k = 0; k < K; ++k) loadings_(i, k) = (k == 0 ? 1.0 : 0.4) * nd(rng_);
      idio_[i] = 0.5 + ud(rng_);
      drift_[i] = 0.05 + 0.05 * nd(rng_);
    }
  }

  Index assets() const noexcept { return N_; }
  Index factors() const noexcept { return K_; }
  const Eigen::MatrixXd& loadings() const noexcept { return loadings_; }

  struct Draw {
    Eigen::VectorXd factor_returns;
    Eigen::VectorXd returns;  // N + 1, cash last
  };

  Draw next() {
    std::normal_distribution<double> nd(0.0, 1.0);
    Draw d;
    d.factor_returns.resize(K_);
    for (Index k = 0; k < K_; ++k) d.factor_returns[k] = factor_vol_[k] * nd(rng_);
    d.returns = drift_ + loadings_ * d.factor_returns;
    for (Index i = 0; i < N_; ++i) d.returns[i] += idio_[i] * nd(rng_);
    d.returns[N_] = 0.0;
    return d;
  }

 private:
  Index N_, K_;
  std::mt19937_64 rng_;
  Eigen::MatrixXd loadings_;
  Eigen::VectorXd idio_, drift_, factor_vol_;
};

// EWMA estimates of the drift, factor variances and residual variances feeding
// alpha, F and D_sqrt. Cash keeps a small positive residual so D stays definite.
class PortfolioEstimator {
 public:
  static constexpr double kCashResidual = 1e-2;

  PortfolioEstimator(const SyntheticMarket& market, double halflife = 20.0)
      : loadings_(market.loadings()),
        decay_(std::exp(-std::log(2.0) / halflife)),
        mean_(Eigen::VectorXd::Constant(market.assets() + 1, 0.05)),
        fvar_(Eigen::VectorXd::Ones(market.factors())),
        rvar_(Eigen::VectorXd::Ones(market.assets() + 1)) {
    mean_[market.assets()] = 0.0;
  }

  void observe(const SyntheticMarket::Draw& d) {
    const double a = 1.0 - decay_;
    mean_ = decay_ * mean_ + a * d.returns;
    fvar_ = decay_ * fvar_ + a * d.factor_returns.cwiseAbs2();
    const Eigen::VectorXd resid = d.returns - loadings_ * d.factor_returns;
    rvar_ = decay_ * rvar_ + a * resid.cwiseAbs2();
  }

  // alpha is scaled by 1/gamma_risk; risk terms are unscaled.
  PortfolioData data(double gamma_risk = 2.0) const {
    const Index n = mean_.size();
    PortfolioData p;
    p.alpha = mean_ / gamma_risk;
    p.F = loadings_ * fvar_.cwiseSqrt().asDiagonal();
    p.d_sqrt = rvar_.cwiseSqrt();
    p.d_sqrt[n - 1] = kCashResidual;
    p.kappa_tc = Eigen::VectorXd::Constant(n, 0.02);
    p.kappa_sh = Eigen::VectorXd::Constant(n, 0.01);
    p.kappa_tc[n - 1] = 0.0;
    p.kappa_sh[n - 1] = 0.0;
    p.L = 1.6;
    p.w_prev = Eigen::VectorXd::Unit(n, n - 1);
    return p;
  }

 private:
  Eigen::MatrixXd loadings_;
  double decay_;
  Eigen::VectorXd mean_, fvar_, rvar_;
};

// A single random instance (no time structure), for oracle comparisons.
inline PortfolioData random_portfolio_data(Index N, std::uint64_t seed) {
  SyntheticMarket market(N, factor_count(N), seed);
  PortfolioEstimator est(market, 5.0);
  for (int t = 0; t < 10; ++t) est.observe(market.next());
  PortfolioData d = est.data();
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::VectorXd wp(N + 1);
  for (Index i = 0; i < N; ++i) wp[i] = 0.05 * nd(rng);
  wp[N] = 1.0 - wp.head(N).sum();
  d.w_prev = wp;
  return d;
}

// Per-period: observe returns, push alpha, F, D_sqrt and the previous weights,
// solve warm-started, carry w forward.
inline SimTrace backtest(const PortfolioFamily& f, int periods, std::uint64_t seed, const Settings& settings = {}) {
  if (periods < 1) throw DimensionError("backtest: periods must be positive");
  SyntheticMarket market(f.N, f.K, seed);
  PortfolioEstimator est(market);
  ParametricSolver ps(f.problem, settings);
  PortfolioData d = est.data();
  const auto init = portfolio_assignment(f, d);
  for (const auto& p : f.problem.parameters()) ps.set(p, init.get(p->id));
  Eigen::VectorXd w_prev = d.w_prev;

  SimTrace trace;
  for (int t = 0; t < periods; ++t) {
    if (t > 0) {
      est.observe(market.next());
      d = est.data();
      ps.set(f.alpha, col_major(d.alpha));
      ps.set(f.F, col_major(d.F));
      ps.set(f.D_sqrt, col_major(Eigen::MatrixXd(d.d_sqrt.asDiagonal())));
      ps.set(f.w_prev, col_major(w_prev));
    }
    const auto t0 = std::chrono::steady_clock::now();
    const Solution s = ps.solve();
    const auto t1 = std::chrono::steady_clock::now();
    if (s.status != Status::solved)
      throw SolverError("backtest: period " + std::to_string(t) + " ended with status " +
                        std::string(status_name(s.status)));
    SimRecord r;
    r.step = t;
    r.theta = ps.theta();
    r.x = ps.x();
    r.objective = ps.user_objective();
    r.iterations = s.iterations;
    r.wall_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count();
    r.refactorized = ps.last_refactorized();
    r.feasibility_violation = ps.user_violation();
    r.status = s.status;
    r.touched = ps.last_touched();
    trace.states.push_back(DenseVec(w_prev.data(), w_prev.data() + w_prev.size()));
    trace.records.push_back(std::move(r));
    const DenseVec w = ps.value(f.w);
    w_prev = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Index>(w.size()));
  }
  trace.factorizations = ps.factorizations();
  return trace;
}

}  // namespace paramqp::zoo
