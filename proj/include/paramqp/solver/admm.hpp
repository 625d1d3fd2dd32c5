#pragma once

// ADMM for  minimize 1/2 x'Px + q'x  s.t.  l <= Ax <= u  with a cached LDL'
// factorization of the quasi-definite KKT matrix
//
//   [ P + sigma I    A'          ]
//   [ A             -diag(1/rho) ]
//
// rho is fixed per row: equality rows use a larger value and unbounded rows a
// tiny one. The row classes are taken from the bounds at factorization time,
// so vector updates never trigger a refactorization.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "paramqp/canon/types.hpp"
#include "paramqp/solver/ldl.hpp"
#include "paramqp/solver/ordering.hpp"

namespace paramqp {

struct Settings {
  double rho = 0.1;
  double sigma = 1e-6;
  double alpha = 1.6;
  double eps_abs = 1e-5;
  double eps_rel = 1e-5;
  double eps_prim_inf = 1e-4;
  double eps_dual_inf = 1e-4;
  int max_iter = 20000;
  int check_interval = 25;
  bool warm_start = true;

  void validate() const {
    if (!(rho > 0)) throw SolverError("settings: rho must be positive");
    if (!(sigma > 0)) throw SolverError("settings: sigma must be positive");
    if (!(alpha > 0 && alpha < 2)) throw SolverError("settings: alpha must lie in (0, 2)");
    if (!(eps_abs > 0) || !(eps_rel > 0)) throw SolverError("settings: tolerances must be positive");
    if (max_iter < 1) throw SolverError("settings: max_iter must be positive");
    if (check_interval < 1) throw SolverError("settings: check_interval must be positive");
  }
};

// Numeric codes match the generated C API.
enum class Status { solved = 0, max_iter_reached = 1, primal_infeasible = 2, dual_infeasible = 3 };

inline std::string_view status_name(Status s) {
  switch (s) {
    case Status::solved: return "solved";
    case Status::max_iter_reached: return "max_iter_reached";
    case Status::primal_infeasible: return "primal_infeasible";
    case Status::dual_infeasible: return "dual_infeasible";
  }
  return "?";
}

struct Solution {
  DenseVec x_tilde;
  DenseVec y;
  Status status = Status::max_iter_reached;
  int iterations = 0;
  double primal_res = 0.0;
  double dual_res = 0.0;
  double objective = 0.0;  // 1/2 x'Px + q'x
};

namespace solver {

inline constexpr double kRhoEqScale = 1e3;
inline constexpr double kRhoMin = 1e-6;
// Bounds beyond this magnitude count as infinite.
inline constexpr double kInfBound = 1e20;

inline bool is_lower_inf(double v) { return v <= -kInfBound; }
inline bool is_upper_inf(double v) { return v >= kInfBound; }

inline double inf_norm(std::span<const double> v) {
  double m = 0.0;
  for (const double x : v) m = std::max(m, std::abs(x));
  return m;
}

// Permuted upper-triangular KKT pattern plus maps from the data arrays into it.
struct KktStructure {
  CscMatrix K;
  std::vector<Index> perm;
  std::vector<Index> pinv;
  std::vector<Index> P_to_K;      // per P value
  std::vector<Index> A_to_K;      // per A value
  std::vector<Index> sigma_to_K;  // per variable, its diagonal
  std::vector<Index> rho_to_K;    // per constraint row, its diagonal
};

inline KktStructure build_kkt(const CscMatrix& P, const CscMatrix& A) {
  const Index n = P.ncols;
  const Index m = A.nrows;
  const Index N = n + m;
  enum Tag : int { kP, kA, kSigma, kRho };
  struct Entry {
    Index row, col;
    Tag tag;
    Index src;
  };
  std::vector<Entry> entries;
  entries.reserve(static_cast<std::size_t>(P.nnz() + A.nnz() + N));
  for (Index j = 0; j < n; ++j)
    for (Index k = P.col_ptr[j]; k < P.col_ptr[j + 1]; ++k) {
      if (P.row_idx[k] > j) throw SolverError("P must be upper triangular");
      entries.push_back({P.row_idx[k], j, kP, k});
    }
  for (Index j = 0; j < n; ++j) entries.push_back({j, j, kSigma, j});
  for (Index j = 0; j < n; ++j)
    for (Index k = A.col_ptr[j]; k < A.col_ptr[j + 1]; ++k) entries.push_back({j, n + A.row_idx[k], kA, k});
  for (Index i = 0; i < m; ++i) entries.push_back({n + i, n + i, kRho, i});

  // Ordering on the combined pattern.
  std::vector<Triplet> pattern;
  pattern.reserve(entries.size());
  for (const auto& e : entries) pattern.push_back({e.row, e.col, 1.0});
  KktStructure s;
  s.perm = minimum_degree_order(build_csc(pattern, N, N));
  s.pinv = inverse_permutation(s.perm);

  for (auto& e : entries) {
    const Index a = s.pinv[e.row], b = s.pinv[e.col];
    e.row = std::min(a, b);
    e.col = std::max(a, b);
  }
  std::vector<std::size_t> order(entries.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return entries[x].col != entries[y].col ? entries[x].col < entries[y].col : entries[x].row < entries[y].row;
  });
  s.K = CscMatrix(N, N);
  s.P_to_K.assign(static_cast<std::size_t>(P.nnz()), -1);
  s.A_to_K.assign(static_cast<std::size_t>(A.nnz()), -1);
  s.sigma_to_K.assign(static_cast<std::size_t>(n), -1);
  s.rho_to_K.assign(static_cast<std::size_t>(m), -1);
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    const auto& e = entries[order[pos]];
    const bool dup = !s.K.row_idx.empty() && pos > 0 && entries[order[pos - 1]].col == e.col &&
                     entries[order[pos - 1]].row == e.row;
    if (!dup) {
      s.K.row_idx.push_back(e.row);
      s.K.values.push_back(0.0);
      ++s.K.col_ptr[e.col + 1];
    }
    const Index slot = static_cast<Index>(s.K.row_idx.size()) - 1;
    switch (e.tag) {
      case kP: s.P_to_K[e.src] = slot; break;
      case kA: s.A_to_K[e.src] = slot; break;
      case kSigma: s.sigma_to_K[e.src] = slot; break;
      case kRho: s.rho_to_K[e.src] = slot; break;
    }
  }
  for (Index j = 0; j < N; ++j) s.K.col_ptr[j + 1] += s.K.col_ptr[j];
  return s;
}

}  // namespace solver

class SolverWorkspace {
 public:
  SolverWorkspace(const QpData& data, Settings settings = {}) : data_(data), settings_(settings) {
    settings_.validate();
    n_ = data_.P.ncols;
    m_ = data_.A.nrows;
    if (data_.P.nrows != n_ || data_.A.ncols != n_) throw DimensionError("setup: P and A dimensions disagree");
    if (data_.q.size() != static_cast<std::size_t>(n_)) throw DimensionError("setup: q has wrong length");
    if (data_.l.size() != static_cast<std::size_t>(m_) || data_.u.size() != static_cast<std::size_t>(m_))
      throw DimensionError("setup: bounds have wrong length");
    check_bounds(data_.l, data_.u);
    kkt_ = solver::build_kkt(data_.P, data_.A);
    ldl_ = solver::LdlFactor(kkt_.K);
    x_.assign(static_cast<std::size_t>(n_), 0.0);
    z_.assign(static_cast<std::size_t>(m_), 0.0);
    y_.assign(static_cast<std::size_t>(m_), 0.0);
    refactor();
  }

  const Settings& settings() const noexcept { return settings_; }
  const QpData& data() const noexcept { return data_; }
  Index n() const noexcept { return n_; }
  Index m() const noexcept { return m_; }
  int factorizations() const noexcept { return factorizations_; }
  const solver::KktStructure& kkt() const noexcept { return kkt_; }
  const solver::LdlFactor& factor() const noexcept { return ldl_; }
  const DenseVec& rho_vec() const noexcept { return rho_; }

  // Replaces vector data. The factorization is untouched; iterates are kept.
  void update_vectors(std::optional<std::span<const double>> q, std::optional<std::span<const double>> l,
                      std::optional<std::span<const double>> u) {
    if (q && q->size() != static_cast<std::size_t>(n_)) throw DimensionError("update_vectors: q length mismatch");
    if (l && l->size() != static_cast<std::size_t>(m_)) throw DimensionError("update_vectors: l length mismatch");
    if (u && u->size() != static_cast<std::size_t>(m_)) throw DimensionError("update_vectors: u length mismatch");
    const std::span<const double> new_l = l ? *l : std::span<const double>(data_.l);
    const std::span<const double> new_u = u ? *u : std::span<const double>(data_.u);
    check_bounds(new_l, new_u);
    if (q) data_.q.assign(q->begin(), q->end());
    if (l) data_.l.assign(l->begin(), l->end());
    if (u) data_.u.assign(u->begin(), u->end());
  }

  // Replaces matrix values on the frozen patterns and refactorizes.
  void update_matrix_values(std::optional<std::span<const double>> P_values,
                            std::optional<std::span<const double>> A_values) {
    if (P_values && P_values->size() != data_.P.values.size())
      throw DimensionError("update_matrix_values: P value count does not match the pattern");
    if (A_values && A_values->size() != data_.A.values.size())
      throw DimensionError("update_matrix_values: A value count does not match the pattern");
    if (P_values) data_.P.values.assign(P_values->begin(), P_values->end());
    if (A_values) data_.A.values.assign(A_values->begin(), A_values->end());
    refactor();
  }

  // Solves K sol = rhs with the cached factors.
  DenseVec ldl_solve(std::span<const double> rhs) const {
    if (rhs.size() != static_cast<std::size_t>(n_ + m_)) throw DimensionError("ldl_solve: rhs length mismatch");
    DenseVec work(rhs.size());
    for (std::size_t k = 0; k < work.size(); ++k) work[k] = rhs[kkt_.perm[k]];
    ldl_.solve_in_place(work);
    DenseVec out(rhs.size());
    for (std::size_t k = 0; k < work.size(); ++k) out[kkt_.perm[k]] = work[k];
    return out;
  }

  // KKT matrix in the original (unpermuted) ordering, upper triangle.
  CscMatrix kkt_matrix() const {
    std::vector<Triplet> t;
    for (Index j = 0; j < kkt_.K.ncols; ++j)
      for (Index k = kkt_.K.col_ptr[j]; k < kkt_.K.col_ptr[j + 1]; ++k) {
        const Index a = kkt_.perm[kkt_.K.row_idx[k]], b = kkt_.perm[j];
        t.push_back({std::min(a, b), std::max(a, b), kkt_.K.values[k]});
      }
    return build_csc(t, kkt_.K.nrows, kkt_.K.ncols);
  }

  void set_iterates(std::span<const double> x, std::span<const double> y) {
    if (x.size() != x_.size() || y.size() != y_.size()) throw DimensionError("set_iterates: length mismatch");
    x_.assign(x.begin(), x.end());
    y_.assign(y.begin(), y.end());
    z_.assign(static_cast<std::size_t>(m_), 0.0);
    spmv_into(data_.A, x_, z_);
  }

  void reset_iterates() {
    std::fill(x_.begin(), x_.end(), 0.0);
    std::fill(y_.begin(), y_.end(), 0.0);
    std::fill(z_.begin(), z_.end(), 0.0);
  }

  Solution solve(int iteration_cap = 0) {
    if (!settings_.warm_start) reset_iterates();
    const auto n = static_cast<std::size_t>(n_);
    const auto m = static_cast<std::size_t>(m_);
    const double alpha = settings_.alpha;
    const double sigma = settings_.sigma;
    const int max_iter = iteration_cap > 0 ? std::min(iteration_cap, settings_.max_iter) : settings_.max_iter;

    DenseVec rhs(n + m), work(n + m), x_prev(n), z_prev(m), z_tilde(m), y_prev(m);
    Solution sol;
    sol.status = Status::max_iter_reached;
    int k = 0;
    for (k = 1; k <= max_iter; ++k) {
      x_prev = x_;
      z_prev = z_;
      y_prev = y_;
      for (std::size_t i = 0; i < n; ++i) rhs[i] = sigma * x_prev[i] - data_.q[i];
      for (std::size_t i = 0; i < m; ++i) rhs[n + i] = z_prev[i] - rho_inv_[i] * y_[i];
      for (std::size_t i = 0; i < n + m; ++i) work[i] = rhs[kkt_.perm[i]];
      ldl_.solve_in_place(work);
      for (std::size_t i = 0; i < n + m; ++i) rhs[kkt_.perm[i]] = work[i];
      for (std::size_t i = 0; i < n; ++i) x_[i] = alpha * rhs[i] + (1.0 - alpha) * x_prev[i];
      for (std::size_t i = 0; i < m; ++i) {
        z_tilde[i] = z_prev[i] + rho_inv_[i] * (rhs[n + i] - y_[i]);
        const double relaxed = alpha * z_tilde[i] + (1.0 - alpha) * z_prev[i];
        const double zi = std::min(std::max(relaxed + rho_inv_[i] * y_[i], data_.l[i]), data_.u[i]);
        y_[i] += rho_[i] * (relaxed - zi);
        z_[i] = zi;
      }
      if (k % settings_.check_interval == 0 || k == max_iter) {
        if (converged(sol)) {
          sol.status = Status::solved;
          break;
        }
        if (primal_infeasible(y_prev)) {
          sol.status = Status::primal_infeasible;
          break;
        }
        if (dual_infeasible(x_prev)) {
          sol.status = Status::dual_infeasible;
          break;
        }
      }
    }
    sol.iterations = std::min(k, max_iter);
    if (sol.status != Status::solved) converged(sol);
    sol.x_tilde = x_;
    sol.y = y_;
    sol.objective = objective(x_);
    return sol;
  }

  double objective(std::span<const double> x) const {
    DenseVec Px(static_cast<std::size_t>(n_));
    spmv_sym_upper_into(data_.P, x, Px);
    double f = 0.0;
    for (Index i = 0; i < n_; ++i) f += 0.5 * x[i] * Px[i] + data_.q[i] * x[i];
    return f;
  }

 private:
  static void check_bounds(std::span<const double> l, std::span<const double> u) {
    for (std::size_t i = 0; i < l.size(); ++i)
      if (l[i] > u[i]) throw SolverError("bounds cross in row " + std::to_string(i) + ": l > u");
  }

  void refactor() {
    rho_.resize(static_cast<std::size_t>(m_));
    rho_inv_.resize(static_cast<std::size_t>(m_));
    for (Index i = 0; i < m_; ++i) {
      const double l = data_.l[i], u = data_.u[i];
      double r = settings_.rho;
      if (solver::is_lower_inf(l) && solver::is_upper_inf(u))
        r = solver::kRhoMin;
      else if (l == u)
        r = solver::kRhoEqScale * settings_.rho;
      rho_[i] = r;
      rho_inv_[i] = 1.0 / r;
    }
    auto& Kx = kkt_.K.values;
    std::fill(Kx.begin(), Kx.end(), 0.0);
    for (std::size_t k = 0; k < kkt_.P_to_K.size(); ++k) Kx[kkt_.P_to_K[k]] += data_.P.values[k];
    for (Index j = 0; j < n_; ++j) Kx[kkt_.sigma_to_K[j]] += settings_.sigma;
    for (std::size_t k = 0; k < kkt_.A_to_K.size(); ++k) Kx[kkt_.A_to_K[k]] = data_.A.values[k];
    for (Index i = 0; i < m_; ++i) Kx[kkt_.rho_to_K[i]] = -rho_inv_[i];
    ++factorizations_;
    const Index positive = ldl_.factor(kkt_.K);
    if (positive != n_)
      throw SolverError("KKT factorization breakdown: inertia (" + std::to_string(positive) + " positive pivots, " +
                        std::to_string(n_) + " expected); P is not positive semidefinite");
  }

  bool converged(Solution& sol) const {
    const auto n = static_cast<std::size_t>(n_);
    const auto m = static_cast<std::size_t>(m_);
    DenseVec Ax(m), Px(n), Aty(n);
    spmv_into(data_.A, x_, Ax);
    spmv_sym_upper_into(data_.P, x_, Px);
    spmv_transpose_into(data_.A, y_, Aty);
    double rp = 0.0, rd = 0.0;
    for (std::size_t i = 0; i < m; ++i) rp = std::max(rp, std::abs(Ax[i] - z_[i]));
    for (std::size_t i = 0; i < n; ++i) rd = std::max(rd, std::abs(Px[i] + data_.q[i] + Aty[i]));
    sol.primal_res = rp;
    sol.dual_res = rd;
    const double eps_p =
        settings_.eps_abs + settings_.eps_rel * std::max(solver::inf_norm(Ax), solver::inf_norm(z_));
    const double eps_d =
        settings_.eps_abs +
        settings_.eps_rel * std::max({solver::inf_norm(Px), solver::inf_norm(Aty), solver::inf_norm(data_.q)});
    return rp <= eps_p && rd <= eps_d;
  }

  bool primal_infeasible(const DenseVec& y_prev) const {
    const auto m = static_cast<std::size_t>(m_);
    DenseVec dy(m);
    for (std::size_t i = 0; i < m; ++i) dy[i] = y_[i] - y_prev[i];
    const double norm_dy = solver::inf_norm(dy);
    if (norm_dy < 1e-30) return false;
    const double eps = settings_.eps_prim_inf * norm_dy;
    DenseVec Atdy(static_cast<std::size_t>(n_));
    spmv_transpose_into(data_.A, dy, Atdy);
    if (solver::inf_norm(Atdy) > eps) return false;
    double support = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      if (dy[i] > 0) {
        if (solver::is_upper_inf(data_.u[i])) {
          if (dy[i] > eps) return false;
          continue;
        }
        support += data_.u[i] * dy[i];
      } else if (dy[i] < 0) {
        if (solver::is_lower_inf(data_.l[i])) {
          if (-dy[i] > eps) return false;
          continue;
        }
        support += data_.l[i] * dy[i];
      }
    }
    return support < -eps;
  }

  bool dual_infeasible(const DenseVec& x_prev) const {
    const auto n = static_cast<std::size_t>(n_);
    DenseVec dx(n);
    for (std::size_t i = 0; i < n; ++i) dx[i] = x_[i] - x_prev[i];
    const double norm_dx = solver::inf_norm(dx);
    if (norm_dx < 1e-30) return false;
    const double eps = settings_.eps_dual_inf * norm_dx;
    DenseVec Pdx(n), Adx(static_cast<std::size_t>(m_));
    spmv_sym_upper_into(data_.P, dx, Pdx);
    if (solver::inf_norm(Pdx) > eps) return false;
    double qdx = 0.0;
    for (std::size_t i = 0; i < n; ++i) qdx += data_.q[i] * dx[i];
    if (qdx > -eps) return false;
    spmv_into(data_.A, dx, Adx);
    for (Index i = 0; i < m_; ++i) {
      const bool lo_inf = solver::is_lower_inf(data_.l[i]);
      const bool up_inf = solver::is_upper_inf(data_.u[i]);
      if (!up_inf && Adx[i] > eps) return false;
      if (!lo_inf && Adx[i] < -eps) return false;
    }
    return true;
  }

  QpData data_;
  Settings settings_;
  Index n_ = 0;
  Index m_ = 0;
  solver::KktStructure kkt_;
  solver::LdlFactor ldl_;
  DenseVec rho_;
  DenseVec rho_inv_;
  DenseVec x_;
  DenseVec z_;
  DenseVec y_;
  int factorizations_ = 0;
};

// One-shot setup and solve.
inline Solution solve_qp(const QpData& data, const Settings& settings = {}) {
  SolverWorkspace ws(data, settings);
  return ws.solve();
}

}  // namespace paramqp
