#pragma once

#include <Eigen/Dense>

#include "paramqp/error.hpp"

namespace paramqp::zoo {

// Right-hand side of the Riccati recursion:
//   Q + A'(P - P B (R + B'P B)^{-1} B'P) A
inline Eigen::MatrixXd dare_rhs(const Eigen::MatrixXd& P, const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R) {
  const Eigen::MatrixXd BtP = B.transpose() * P;
  const Eigen::MatrixXd S = R + BtP * B;
  const Eigen::MatrixXd inner = P - BtP.transpose() * S.ldlt().solve(BtP);
  Eigen::MatrixXd next = Q + A.transpose() * inner * A;
  return 0.5 * (next + next.transpose());
}

// Fixed-point iteration from P = Q until the step is below `tol` (max norm).
inline Eigen::MatrixXd solve_dare(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                                  const Eigen::MatrixXd& R, double tol = 1e-10, int max_iter = 10000) {
  if (A.rows() != A.cols() || B.rows() != A.rows() || Q.rows() != A.rows() || R.rows() != B.cols())
    throw DimensionError("solve_dare: inconsistent dimensions");
  Eigen::MatrixXd P = Q;
  for (int k = 0; k < max_iter; ++k) {
    Eigen::MatrixXd next = dare_rhs(P, A, B, Q, R);
    const double step = (next - P).cwiseAbs().maxCoeff();
    P = std::move(next);
    if (step < tol) return P;
  }
  throw SolverError("solve_dare: no convergence after " + std::to_string(max_iter) + " iterations");
}

}  // namespace paramqp::zoo
