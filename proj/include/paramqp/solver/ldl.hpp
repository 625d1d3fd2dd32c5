#pragma once

// Up-looking LDL' factorization of a quasi-definite matrix given by its upper
// triangle. The symbolic phase (elimination tree, column counts) runs once per
// pattern; numeric refactorization reuses it. D is kept as its reciprocal so
// that solves never divide.

#include <vector>

#include "paramqp/sparse/csc.hpp"

namespace paramqp::solver {

class LdlFactor {
 public:
  LdlFactor() = default;

  // Symbolic analysis of the upper-triangular pattern `K`.
  explicit LdlFactor(const CscMatrix& K) : n_(K.ncols) {
    etree_.assign(static_cast<std::size_t>(n_), -1);
    std::vector<Index> col_count(static_cast<std::size_t>(n_), 0);
    std::vector<Index> work(static_cast<std::size_t>(n_), -1);
    for (Index j = 0; j < n_; ++j) {
      work[j] = j;
      for (Index p = K.col_ptr[j]; p < K.col_ptr[j + 1]; ++p) {
        Index i = K.row_idx[p];
        if (i > j) throw SolverError("LDL: matrix is not upper triangular");
        while (work[i] != j) {
          if (etree_[i] == -1) etree_[i] = j;
          ++col_count[i];
          work[i] = j;
          i = etree_[i];
        }
      }
    }
    Lp_.assign(static_cast<std::size_t>(n_) + 1, 0);
    for (Index i = 0; i < n_; ++i) Lp_[i + 1] = Lp_[i] + col_count[i];
    Li_.assign(static_cast<std::size_t>(Lp_[n_]), 0);
    Lx_.assign(static_cast<std::size_t>(Lp_[n_]), 0.0);
    D_.assign(static_cast<std::size_t>(n_), 0.0);
    Dinv_.assign(static_cast<std::size_t>(n_), 0.0);
  }

  // Numeric factorization. Returns the number of positive pivots; throws on a
  // zero pivot.
  Index factor(const CscMatrix& K) {
    std::vector<double> y(static_cast<std::size_t>(n_), 0.0);
    std::vector<char> marked(static_cast<std::size_t>(n_), 0);
    std::vector<Index> pattern(static_cast<std::size_t>(n_)), stack(static_cast<std::size_t>(n_));
    std::vector<Index> next(Lp_.begin(), Lp_.end() - 1);
    Index positive = 0;
    for (Index k = 0; k < n_; ++k) {
      Index top = 0;
      D_[k] = 0.0;
      for (Index p = K.col_ptr[k]; p < K.col_ptr[k + 1]; ++p) {
        const Index b = K.row_idx[p];
        if (b == k) {
          D_[k] = K.values[p];
          continue;
        }
        y[b] = K.values[p];
        if (marked[b]) continue;
        // Walk the elimination tree to collect the reach of b.
        Index depth = 0;
        for (Index i = b; i != -1 && i < k && !marked[i]; i = etree_[i]) {
          marked[i] = 1;
          stack[depth++] = i;
        }
        while (depth > 0) pattern[top++] = stack[--depth];
      }
      for (Index t = top - 1; t >= 0; --t) {
        const Index c = pattern[t];
        const double yc = y[c];
        for (Index j = Lp_[c]; j < next[c]; ++j) y[Li_[j]] -= Lx_[j] * yc;
        const Index slot = next[c]++;
        Li_[slot] = k;
        Lx_[slot] = yc * Dinv_[c];
        D_[k] -= yc * Lx_[slot];
        y[c] = 0.0;
        marked[c] = 0;
      }
      if (D_[k] == 0.0) throw SolverError("LDL: zero pivot at column " + std::to_string(k));
      if (D_[k] > 0.0) ++positive;
      Dinv_[k] = 1.0 / D_[k];
    }
    return positive;
  }

  // In-place solve of L D L' x = b.
  void solve_in_place(std::span<double> x) const {
    for (Index i = 0; i < n_; ++i)
      for (Index j = Lp_[i]; j < Lp_[i + 1]; ++j) x[Li_[j]] -= Lx_[j] * x[i];
    for (Index i = 0; i < n_; ++i) x[i] *= Dinv_[i];
    for (Index i = n_ - 1; i >= 0; --i)
      for (Index j = Lp_[i]; j < Lp_[i + 1]; ++j) x[i] -= Lx_[j] * x[Li_[j]];
  }

  Index size() const noexcept { return n_; }
  Index nnz_L() const noexcept { return Lp_.empty() ? 0 : Lp_.back(); }
  const std::vector<Index>& etree() const noexcept { return etree_; }
  const std::vector<Index>& Lp() const noexcept { return Lp_; }
  const std::vector<Index>& Li() const noexcept { return Li_; }
  const std::vector<double>& Lx() const noexcept { return Lx_; }
  const std::vector<double>& Dinv() const noexcept { return Dinv_; }

 private:
  Index n_ = 0;
  std::vector<Index> etree_;
  std::vector<Index> Lp_;
  std::vector<Index> Li_;
  std::vector<double> Lx_;
  std::vector<double> D_;
  std::vector<double> Dinv_;
};

}  // namespace paramqp::solver
