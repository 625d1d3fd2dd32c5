#pragma once

// Position/velocity MPC for a point-mass quadcopter model, written in the
// square-root DPP form: quadratic costs enter as sum_squares(M_sqrt @ X).
//
//   Z: 6 x (H+1) states (position, velocity), U: 3 x (H+1) force offsets from
//   hover. U_0 is pinned to the input already being applied (u_prev), so the
//   first free input is U_1.

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "paramqp/pipeline.hpp"
#include "paramqp/zoo/dare.hpp"

namespace paramqp::zoo {

struct MpcFamily {
  Index H = 0;
  Index n_hs = 0;
  std::vector<std::array<double, 2>> normals;  // c_j
  Variable Z;
  Variable U;
  Parameter QT_sqrt, Q_sqrt, R_sqrt, T_sqrt, A, B, gamma, d, u_vmin, u_vmax, z_meas, u_prev;
  Problem problem;
};

// Defaults for the parts the model leaves open.
struct MpcConstants {
  double mass = 0.5;
  double g = 9.81;
  double gamma = std::tan(std::numbers::pi / 6.0);
  double dt = 0.1;
  std::array<double, 6> q_diag{10, 10, 10, 1, 1, 1};
  std::array<double, 3> r_diag{0.1, 0.1, 0.1};
  std::array<double, 3> t_diag{0.1, 0.1, 0.1};
  double u_vmin() const { return -0.5 * mass * g; }
  double u_vmax() const { return mass * g; }
};

inline std::vector<std::array<double, 2>> polygon_normals(Index n_hs) {
  std::vector<std::array<double, 2>> c;
  for (Index j = 0; j < n_hs; ++j) {
    const double a = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(n_hs);
    c.push_back({std::cos(a), std::sin(a)});
  }
  return c;
}

namespace detail {
inline MpcFamily mpc_skeleton(Index H, Index n_hs) {
  if (H < 2) throw DimensionError("build_mpc: horizon must be at least 2");
  if (n_hs < 3) throw DimensionError("build_mpc: need at least 3 halfspaces");
  MpcFamily f;
  f.H = H;
  f.n_hs = n_hs;
  f.normals = polygon_normals(n_hs);
  f.Z = make_variable("Z", {6, H + 1});
  f.U = make_variable("U", {3, H + 1});
  f.QT_sqrt = make_parameter("Q_T_sqrt", {6, 6});
  f.Q_sqrt = make_parameter("Q_sqrt", {6, 6}, Sign::nonneg, diagonal_pattern(6));
  f.R_sqrt = make_parameter("R_sqrt", {3, 3}, Sign::nonneg, diagonal_pattern(3));
  f.T_sqrt = make_parameter("T_sqrt", {3, 3}, Sign::nonneg, diagonal_pattern(3));
  f.A = make_parameter("A", {6, 6});
  f.B = make_parameter("B", {6, 3});
  f.gamma = make_parameter("gamma", {1, 1}, Sign::nonneg);
  f.d = make_parameter("d", {1, H - 1});
  f.u_vmin = make_parameter("u_vmin", {1, 1});
  f.u_vmax = make_parameter("u_vmax", {1, 1});
  f.z_meas = make_parameter("z_meas", {6, 1});
  f.u_prev = make_parameter("u_prev", {3, 1});
  return f;
}

inline Expr mpc_objective(const MpcFamily& f) {
  const Index H = f.H;
  const Expr Z = f.Z, U = f.U;
  return sum_squares(matmul(f.QT_sqrt, column(Z, H))) + sum_squares(matmul(f.Q_sqrt, index(Z, 0, 5, 0, H - 1))) +
         sum_squares(matmul(f.R_sqrt, index(U, 0, 2, 0, H - 1))) +
         sum_squares(matmul(f.T_sqrt, index(U, 0, 2, 1, H) - index(U, 0, 2, 0, H - 1)));
}

inline std::vector<Constraint> mpc_common_constraints(const MpcFamily& f) {
  const Index H = f.H;
  const Expr Z = f.Z, U = f.U;
  const Expr thrust = index(U, 2, 2, 1, H - 1);
  return {eq(column(Z, 0), f.z_meas),
          eq(column(U, 0), f.u_prev),
          eq(index(Z, 0, 5, 1, H), matmul(f.A, index(Z, 0, 5, 0, H - 1)) + matmul(f.B, index(U, 0, 2, 0, H - 1))),
          ge(thrust, f.u_vmin),
          le(thrust, f.u_vmax)};
}
}  // namespace detail

inline MpcFamily build_mpc(Index H, Index n_hs = 8) {
  MpcFamily f = detail::mpc_skeleton(H, n_hs);
  auto cons = detail::mpc_common_constraints(f);
  const Expr horizontal = index(f.U, 0, 1, 1, H - 1);
  const Expr thrust = index(f.U, 2, 2, 1, H - 1);
  for (const auto& c : f.normals)
    cons.push_back(le(matmul(constant({1, 2}, {c[0], c[1]}), horizontal), Expr(f.gamma) * thrust + f.d));
  f.problem = Problem(Sense::minimize, detail::mpc_objective(f), std::move(cons), {f.Z, f.U},
                      {f.QT_sqrt, f.Q_sqrt, f.R_sqrt, f.T_sqrt, f.A, f.B, f.gamma, f.d, f.u_vmin, f.u_vmax, f.z_meas,
                       f.u_prev},
                      "mpc");
  return f;
}

// The direct transcription with the tilt bound gamma * (U_2 + m g): products of
// parameters make it fail check_dpp.
inline Problem build_mpc_non_dpp(Index H, Index n_hs = 8) {
  MpcFamily f = detail::mpc_skeleton(H, n_hs);
  const auto m = make_parameter("m", {1, 1}, Sign::nonneg);
  const auto g = make_parameter("g", {1, 1}, Sign::nonneg);
  auto cons = detail::mpc_common_constraints(f);
  const Expr horizontal = index(f.U, 0, 1, 1, H - 1);
  const Expr thrust = index(f.U, 2, 2, 1, H - 1);
  for (const auto& c : f.normals)
    cons.push_back(
        le(matmul(constant({1, 2}, {c[0], c[1]}), horizontal), Expr(f.gamma) * (thrust + Expr(m) * Expr(g))));
  return Problem(Sense::minimize, detail::mpc_objective(f), std::move(cons), {f.Z, f.U},
                 {f.QT_sqrt, f.Q_sqrt, f.R_sqrt, f.T_sqrt, f.A, f.B, f.gamma, m, g, f.u_vmin, f.u_vmax, f.z_meas,
                  f.u_prev},
                 "mpc_non_dpp");
}

// Discretized double integrator with force input (zero-order hold).
inline void point_mass_dynamics(const MpcConstants& k, Eigen::MatrixXd& A, Eigen::MatrixXd& B) {
  A = Eigen::MatrixXd::Identity(6, 6);
  A.topRightCorner(3, 3) = k.dt * Eigen::MatrixXd::Identity(3, 3);
  B = Eigen::MatrixXd::Zero(6, 3);
  B.topRows(3) = (0.5 * k.dt * k.dt / k.mass) * Eigen::MatrixXd::Identity(3, 3);
  B.bottomRows(3) = (k.dt / k.mass) * Eigen::MatrixXd::Identity(3, 3);
}

struct MpcData {
  Eigen::MatrixXd A, B, Q, R, T, QT;
  double gamma = 0.0;
  double mass = 0.0;
  double g = 0.0;
  double u_vmin = 0.0;
  double u_vmax = 0.0;
};

inline MpcData mpc_data(const MpcConstants& k, const Eigen::MatrixXd* A = nullptr, const Eigen::MatrixXd* B = nullptr) {
  MpcData d;
  point_mass_dynamics(k, d.A, d.B);
  if (A) d.A = *A;
  if (B) d.B = *B;
  d.Q = Eigen::Map<const Eigen::VectorXd>(k.q_diag.data(), 6).asDiagonal();
  d.R = Eigen::Map<const Eigen::VectorXd>(k.r_diag.data(), 3).asDiagonal();
  d.T = Eigen::Map<const Eigen::VectorXd>(k.t_diag.data(), 3).asDiagonal();
  d.QT = solve_dare(d.A, d.B, d.Q, d.R);
  d.gamma = k.gamma;
  d.mass = k.mass;
  d.g = k.g;
  d.u_vmin = k.u_vmin();
  d.u_vmax = k.u_vmax();
  return d;
}

inline std::vector<double> col_major(const Eigen::MatrixXd& M) { return std::vector<double>(M.data(), M.data() + M.size()); }

// Transposed Cholesky factor: M = L L', returns L'.
inline Eigen::MatrixXd sqrt_factor(const Eigen::MatrixXd& M) {
  const Eigen::LLT<Eigen::MatrixXd> llt(M);
  if (llt.info() != Eigen::Success) throw DimensionError("sqrt_factor: matrix is not positive definite");
  return llt.matrixL().transpose();
}

// Parameter values (dense, column-major) for every MPC parameter.
inline Assignment mpc_assignment(const MpcFamily& f, const MpcData& d, std::span<const double> z_meas,
                                 std::span<const double> u_prev) {
  Assignment a;
  a.set(f.QT_sqrt, col_major(sqrt_factor(d.QT)));
  a.set(f.Q_sqrt, col_major(d.Q.cwiseSqrt()));
  a.set(f.R_sqrt, col_major(d.R.cwiseSqrt()));
  a.set(f.T_sqrt, col_major(d.T.cwiseSqrt()));
  a.set(f.A, col_major(d.A));
  a.set(f.B, col_major(d.B));
  a.set(f.gamma, {d.gamma});
  a.set(f.d, std::vector<double>(static_cast<std::size_t>(f.H - 1), d.gamma * d.mass * d.g));
  a.set(f.u_vmin, {d.u_vmin});
  a.set(f.u_vmax, {d.u_vmax});
  a.set(f.z_meas, std::vector<double>(z_meas.begin(), z_meas.end()));
  a.set(f.u_prev, std::vector<double>(u_prev.begin(), u_prev.end()));
  return a;
}

inline DenseVec mpc_theta(const MpcFamily& f, const MpcData& d, std::span<const double> z_meas,
                          std::span<const double> u_prev) {
  return flatten_parameters(f.problem, mpc_assignment(f, d, z_meas, u_prev));
}

struct SimRecord {
  int step = 0;
  DenseVec theta;  // parameter values used for this solve
  DenseVec x;      // retrieved user variables
  double objective = 0.0;
  int iterations = 0;
  long long wall_ns = 0;
  bool refactorized = false;
  double feasibility_violation = 0.0;
  Status status = Status::solved;
  std::vector<Segment> touched;
};

struct SimTrace {
  std::vector<SimRecord> records;
  std::vector<DenseVec> states;  // z_k before each step
  int factorizations = 0;
};

// Closed loop: each step sets z_meas and u_prev, solves, applies the pinned
// input U_0 (= u_prev) through the true plant and carries U_1 over as the next
// u_prev.
inline SimTrace simulate_mpc(const MpcFamily& f, const MpcData& model, const Eigen::MatrixXd& A_true,
                             const Eigen::MatrixXd& B_true, std::span<const double> z0, int steps,
                             const Settings& settings = {}) {
  SimTrace trace;
  if (steps <= 0) return trace;
  ParametricSolver ps(f.problem, settings);
  Eigen::VectorXd z = Eigen::Map<const Eigen::VectorXd>(z0.data(), 6);
  Eigen::VectorXd u_prev = Eigen::VectorXd::Zero(3);
  const auto init = mpc_assignment(f, model, z0, std::vector<double>(3, 0.0));
  for (const auto& p : f.problem.parameters()) ps.set(p, init.get(p->id));
  for (int k = 0; k < steps; ++k) {
    const DenseVec zv(z.data(), z.data() + 6), uv(u_prev.data(), u_prev.data() + 3);
    ps.set(f.z_meas, zv);
    ps.set(f.u_prev, uv);
    const auto t0 = std::chrono::steady_clock::now();
    const Solution s = ps.solve();
    const auto t1 = std::chrono::steady_clock::now();
    if (s.status != Status::solved)
      throw SolverError("simulate_mpc: step " + std::to_string(k) + " ended with status " +
                        std::string(status_name(s.status)));
    SimRecord r;
    r.step = k;
    r.theta = ps.theta();
    r.x = ps.x();
    r.objective = ps.user_objective();
    r.iterations = s.iterations;
    r.wall_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count();
    r.refactorized = ps.last_refactorized();
    r.feasibility_violation = ps.user_violation();
    r.status = s.status;
    r.touched = ps.last_touched();
    trace.states.push_back(zv);
    trace.records.push_back(std::move(r));

    const DenseVec U = ps.value(f.U);
    const Eigen::Vector3d u0(U[0], U[1], U[2]);
    z = A_true * z + B_true * u0;
    u_prev = Eigen::Vector3d(U[3], U[4], U[5]);
  }
  trace.factorizations = ps.factorizations();
  return trace;
}

// Max over k of |Z_{k+1} - A Z_k - B U_k| for a retrieved (Z, U) stacked vector.
inline double dynamics_residual(const MpcFamily& f, const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                std::span<const double> x) {
  const Index H = f.H;
  const Eigen::Map<const Eigen::MatrixXd> Z(x.data(), 6, H + 1);
  const Eigen::Map<const Eigen::MatrixXd> U(x.data() + 6 * (H + 1), 3, H + 1);
  double worst = 0.0;
  for (Index k = 0; k < H; ++k)
    worst = std::max(worst, (Z.col(k + 1) - A * Z.col(k) - B * U.col(k)).cwiseAbs().maxCoeff());
  return worst;
}

}  // namespace paramqp::zoo
