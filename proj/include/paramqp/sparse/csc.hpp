#pragma once

// Compressed-sparse-column storage and the mat-vec kernels shared by the
// canonicalizer, the ADMM solver and the code generator.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "paramqp/error.hpp"

namespace paramqp {

using Index = std::int32_t;
using DenseVec = std::vector<double>;

struct Triplet {
  Index row;
  Index col;
  double value;
};

struct CscMatrix {
  Index nrows = 0;
  Index ncols = 0;
  std::vector<Index> col_ptr{0};
  std::vector<Index> row_idx;
  std::vector<double> values;

  CscMatrix() = default;
  CscMatrix(Index rows, Index cols) : nrows(rows), ncols(cols), col_ptr(static_cast<std::size_t>(cols) + 1, 0) {}

  Index nnz() const noexcept { return col_ptr.empty() ? 0 : col_ptr.back(); }

  // Same (col_ptr, row_idx); values are ignored.
  bool same_pattern(const CscMatrix& other) const noexcept {
    return nrows == other.nrows && ncols == other.ncols && col_ptr == other.col_ptr && row_idx == other.row_idx;
  }

  friend bool operator==(const CscMatrix&, const CscMatrix&) = default;
};

// Returns an empty string when `m` satisfies every CSC structural invariant,
// otherwise a description of the first violation found.
inline std::string csc_violation(const CscMatrix& m) {
  if (m.nrows < 0 || m.ncols < 0) return "negative dimension";
  if (m.col_ptr.size() != static_cast<std::size_t>(m.ncols) + 1) return "col_ptr length != ncols + 1";
  if (m.col_ptr.front() != 0) return "col_ptr[0] != 0";
  for (Index j = 0; j < m.ncols; ++j) {
    if (m.col_ptr[j + 1] < m.col_ptr[j]) return "col_ptr decreasing at column " + std::to_string(j);
  }
  const auto nnz = static_cast<std::size_t>(m.col_ptr.back());
  if (m.row_idx.size() != nnz) return "row_idx length != nnz";
  if (m.values.size() != nnz) return "values length != nnz";
  for (Index j = 0; j < m.ncols; ++j) {
    for (Index k = m.col_ptr[j]; k < m.col_ptr[j + 1]; ++k) {
      if (m.row_idx[k] < 0 || m.row_idx[k] >= m.nrows) return "row index out of range in column " + std::to_string(j);
      if (k > m.col_ptr[j] && m.row_idx[k] <= m.row_idx[k - 1])
        return "row indices not strictly increasing in column " + std::to_string(j);
    }
  }
  return {};
}

inline bool csc_valid(const CscMatrix& m) { return csc_violation(m).empty(); }

// Duplicates are summed. Explicitly inserted zeros stay in the pattern so that
// value-only updates keep a frozen structure.
inline CscMatrix build_csc(std::span<const Triplet> triplets, Index nrows, Index ncols) {
  if (nrows < 0 || ncols < 0) throw DimensionError("build_csc: negative dimension");
  for (const auto& t : triplets) {
    if (t.row < 0 || t.row >= nrows || t.col < 0 || t.col >= ncols)
      throw DimensionError("build_csc: triplet (" + std::to_string(t.row) + ", " + std::to_string(t.col) +
                           ") out of bounds for " + std::to_string(nrows) + "x" + std::to_string(ncols));
  }
  std::vector<std::size_t> order(triplets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Stable so duplicate entries are summed in insertion order.
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::tie(triplets[a].col, triplets[a].row) < std::tie(triplets[b].col, triplets[b].row);
  });

  CscMatrix m(nrows, ncols);
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    const auto& t = triplets[order[pos]];
    if (pos > 0) {
      const auto& prev = triplets[order[pos - 1]];
      if (prev.row == t.row && prev.col == t.col) {
        m.values.back() += t.value;
        continue;
      }
    }
    m.row_idx.push_back(t.row);
    m.values.push_back(t.value);
    ++m.col_ptr[static_cast<std::size_t>(t.col) + 1];
  }
  for (Index j = 0; j < ncols; ++j) m.col_ptr[j + 1] += m.col_ptr[j];
  return m;
}

inline CscMatrix build_csc(const std::vector<Triplet>& triplets, Index nrows, Index ncols) {
  return build_csc(std::span<const Triplet>(triplets), nrows, ncols);
}

// Dense column-major copy (entry (i, j) at i + j * nrows).
inline std::vector<double> to_dense(const CscMatrix& m) {
  std::vector<double> out(static_cast<std::size_t>(m.nrows) * static_cast<std::size_t>(m.ncols), 0.0);
  for (Index j = 0; j < m.ncols; ++j)
    for (Index k = m.col_ptr[j]; k < m.col_ptr[j + 1]; ++k)
      out[static_cast<std::size_t>(m.row_idx[k]) + static_cast<std::size_t>(j) * m.nrows] += m.values[k];
  return out;
}

// Keeps every entry, including zeros, when `keep_zeros` is set.
inline CscMatrix from_dense(std::span<const double> col_major, Index nrows, Index ncols, bool keep_zeros = false) {
  if (col_major.size() != static_cast<std::size_t>(nrows) * static_cast<std::size_t>(ncols))
    throw DimensionError("from_dense: buffer length does not match dimensions");
  CscMatrix m(nrows, ncols);
  for (Index j = 0; j < ncols; ++j) {
    for (Index i = 0; i < nrows; ++i) {
      const double v = col_major[static_cast<std::size_t>(i) + static_cast<std::size_t>(j) * nrows];
      if (v != 0.0 || keep_zeros) {
        m.row_idx.push_back(i);
        m.values.push_back(v);
      }
    }
    m.col_ptr[j + 1] = static_cast<Index>(m.row_idx.size());
  }
  return m;
}

inline CscMatrix transpose(const CscMatrix& m) {
  CscMatrix t(m.ncols, m.nrows);
  t.row_idx.resize(m.row_idx.size());
  t.values.resize(m.values.size());
  for (Index k = 0; k < m.nnz(); ++k) ++t.col_ptr[static_cast<std::size_t>(m.row_idx[k]) + 1];
  for (Index i = 0; i < m.nrows; ++i) t.col_ptr[i + 1] += t.col_ptr[i];
  std::vector<Index> next(t.col_ptr.begin(), t.col_ptr.end() - 1);
  for (Index j = 0; j < m.ncols; ++j) {
    for (Index k = m.col_ptr[j]; k < m.col_ptr[j + 1]; ++k) {
      const Index dst = next[m.row_idx[k]]++;
      t.row_idx[dst] = j;
      t.values[dst] = m.values[k];
    }
  }
  return t;
}

inline CscMatrix identity_csc(Index n) {
  CscMatrix m(n, n);
  for (Index j = 0; j < n; ++j) {
    m.row_idx.push_back(j);
    m.values.push_back(1.0);
    m.col_ptr[j + 1] = j + 1;
  }
  return m;
}

// out = M v. `out` must already have length M.nrows; nothing is allocated.
inline void spmv_into(const CscMatrix& m, std::span<const double> v, std::span<double> out) {
  if (v.size() != static_cast<std::size_t>(m.ncols) || out.size() != static_cast<std::size_t>(m.nrows))
    throw DimensionError("spmv: dimension mismatch");
  std::fill(out.begin(), out.end(), 0.0);
  for (Index j = 0; j < m.ncols; ++j) {
    const double vj = v[j];
    for (Index k = m.col_ptr[j]; k < m.col_ptr[j + 1]; ++k) out[m.row_idx[k]] += m.values[k] * vj;
  }
}

inline DenseVec spmv(const CscMatrix& m, std::span<const double> v) {
  DenseVec out(static_cast<std::size_t>(m.nrows));
  spmv_into(m, v, out);
  return out;
}

// accum += M[:, cols] v[cols]. `cols` must be sorted and inside [0, ncols).
inline void spmv_columns(const CscMatrix& m, std::span<const double> v, std::span<const Index> cols,
                         std::span<double> accum) {
  if (v.size() != static_cast<std::size_t>(m.ncols) || accum.size() != static_cast<std::size_t>(m.nrows))
    throw DimensionError("spmv_columns: dimension mismatch");
  for (std::size_t c = 0; c < cols.size(); ++c) {
    const Index j = cols[c];
    if (j < 0 || j >= m.ncols) throw DimensionError("spmv_columns: column " + std::to_string(j) + " out of range");
    if (c > 0 && j <= cols[c - 1]) throw DimensionError("spmv_columns: column set not sorted");
  }
  for (const Index j : cols) {
    const double vj = v[j];
    for (Index k = m.col_ptr[j]; k < m.col_ptr[j + 1]; ++k) accum[m.row_idx[k]] += m.values[k] * vj;
  }
}

// out = M^T v.
inline void spmv_transpose_into(const CscMatrix& m, std::span<const double> v, std::span<double> out) {
  if (v.size() != static_cast<std::size_t>(m.nrows) || out.size() != static_cast<std::size_t>(m.ncols))
    throw DimensionError("spmv_transpose: dimension mismatch");
  for (Index j = 0; j < m.ncols; ++j) {
    double s = 0.0;
    for (Index k = m.col_ptr[j]; k < m.col_ptr[j + 1]; ++k) s += m.values[k] * v[m.row_idx[k]];
    out[j] = s;
  }
}

// out = M v where M is symmetric and only its upper triangle is stored.
inline void spmv_sym_upper_into(const CscMatrix& m, std::span<const double> v, std::span<double> out) {
  if (m.nrows != m.ncols || v.size() != static_cast<std::size_t>(m.ncols) ||
      out.size() != static_cast<std::size_t>(m.nrows))
    throw DimensionError("spmv_sym_upper: dimension mismatch");
  std::fill(out.begin(), out.end(), 0.0);
  for (Index j = 0; j < m.ncols; ++j) {
    for (Index k = m.col_ptr[j]; k < m.col_ptr[j + 1]; ++k) {
      const Index i = m.row_idx[k];
      out[i] += m.values[k] * v[j];
      if (i != j) out[j] += m.values[k] * v[i];
    }
  }
}

}  // namespace paramqp
