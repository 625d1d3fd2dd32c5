#pragma once

// Symbolic building blocks for canonicalization. A ThetaAffine is an affine
// function of the flat parameter vector; an AffineExpr is a matrix whose
// entries are affine in the canonical variables with ThetaAffine coefficients.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "paramqp/dsl/expr.hpp"

namespace paramqp::canon {

// sum_k coef_k * theta_k + constant, terms sorted by theta index.
struct ThetaAffine {
  std::vector<std::pair<Index, double>> terms;
  double constant = 0.0;

  ThetaAffine() = default;
  explicit ThetaAffine(double c) : constant(c) {}

  static ThetaAffine param(Index k, double coef = 1.0) {
    ThetaAffine t;
    t.terms.emplace_back(k, coef);
    return t;
  }

  bool is_constant() const noexcept { return terms.empty(); }
  // Identically zero for every theta.
  bool is_zero() const noexcept { return terms.empty() && constant == 0.0; }

  double evaluate(const std::vector<double>& theta) const {
    double s = 0.0;
    for (const auto& [k, c] : terms) s += c * theta[static_cast<std::size_t>(k)];
    return s + constant;
  }
};

inline ThetaAffine operator+(const ThetaAffine& a, const ThetaAffine& b) {
  ThetaAffine out;
  out.constant = a.constant + b.constant;
  out.terms.reserve(a.terms.size() + b.terms.size());
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < a.terms.size() || j < b.terms.size()) {
    if (j == b.terms.size() || (i < a.terms.size() && a.terms[i].first < b.terms[j].first)) {
      out.terms.push_back(a.terms[i++]);
    } else if (i == a.terms.size() || b.terms[j].first < a.terms[i].first) {
      out.terms.push_back(b.terms[j++]);
    } else {
      out.terms.emplace_back(a.terms[i].first, a.terms[i].second + b.terms[j].second);
      ++i;
      ++j;
    }
  }
  return out;
}

// 0 - x keeps +0.0 for zero entries.
inline ThetaAffine operator-(const ThetaAffine& a) {
  ThetaAffine out;
  out.constant = 0.0 - a.constant;
  out.terms.reserve(a.terms.size());
  for (const auto& [k, c] : a.terms) out.terms.emplace_back(k, 0.0 - c);
  return out;
}

inline ThetaAffine scaled(const ThetaAffine& a, double s) {
  ThetaAffine out;
  if (s == 0.0) return out;
  out.constant = a.constant * s;
  out.terms.reserve(a.terms.size());
  for (const auto& [k, c] : a.terms) out.terms.emplace_back(k, c * s);
  return out;
}

// Product of two affine functions; stays affine only when one side is constant.
inline ThetaAffine operator*(const ThetaAffine& a, const ThetaAffine& b) {
  if (a.is_constant()) return scaled(b, a.constant);
  if (b.is_constant()) return scaled(a, b.constant);
  throw DppError("product of two parameter-dependent quantities during canonicalization");
}

// One matrix entry: sum_v coefs[v] * xtilde_v + offset.
struct AffineEntry {
  std::vector<std::pair<Index, ThetaAffine>> coefs;  // sorted by canonical variable
  ThetaAffine offset;

  bool var_free() const noexcept { return coefs.empty(); }
};

inline AffineEntry operator+(const AffineEntry& a, const AffineEntry& b) {
  AffineEntry out;
  out.offset = a.offset + b.offset;
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < a.coefs.size() || j < b.coefs.size()) {
    if (j == b.coefs.size() || (i < a.coefs.size() && a.coefs[i].first < b.coefs[j].first)) {
      out.coefs.push_back(a.coefs[i++]);
    } else if (i == a.coefs.size() || b.coefs[j].first < a.coefs[i].first) {
      out.coefs.push_back(b.coefs[j++]);
    } else {
      auto sum = a.coefs[i].second + b.coefs[j].second;
      if (!sum.is_zero()) out.coefs.emplace_back(a.coefs[i].first, std::move(sum));
      ++i;
      ++j;
    }
  }
  return out;
}

inline AffineEntry operator-(const AffineEntry& a) {
  AffineEntry out;
  out.offset = -a.offset;
  out.coefs.reserve(a.coefs.size());
  for (const auto& [v, c] : a.coefs) out.coefs.emplace_back(v, -c);
  return out;
}

// k * entry with k free of variables.
inline AffineEntry operator*(const ThetaAffine& k, const AffineEntry& e) {
  AffineEntry out;
  if (k.is_zero()) return out;
  out.offset = k * e.offset;
  out.coefs.reserve(e.coefs.size());
  for (const auto& [v, c] : e.coefs) {
    auto p = k * c;
    if (!p.is_zero()) out.coefs.emplace_back(v, std::move(p));
  }
  return out;
}

// Entries are column-major.
struct AffineExpr {
  Shape shape;
  std::vector<AffineEntry> entries;

  AffineExpr() = default;
  explicit AffineExpr(Shape s) : shape(s), entries(static_cast<std::size_t>(s.size())) {}

  AffineEntry& at(Index i, Index j) { return entries[static_cast<std::size_t>(i + j * shape.rows)]; }
  const AffineEntry& at(Index i, Index j) const { return entries[static_cast<std::size_t>(i + j * shape.rows)]; }
  // Broadcast-aware access for 1x1 operands.
  const AffineEntry& bcast(Index i, Index j) const { return shape.is_scalar() ? entries[0] : at(i, j); }

  bool var_free() const {
    for (const auto& e : entries)
      if (!e.var_free()) return false;
    return true;
  }
};

inline AffineExpr add(const AffineExpr& a, const AffineExpr& b, Shape out_shape) {
  AffineExpr out(out_shape);
  for (Index j = 0; j < out_shape.cols; ++j)
    for (Index i = 0; i < out_shape.rows; ++i) out.at(i, j) = a.bcast(i, j) + b.bcast(i, j);
  return out;
}

inline AffineExpr negate(const AffineExpr& a) {
  AffineExpr out(a.shape);
  for (std::size_t k = 0; k < a.entries.size(); ++k) out.entries[k] = -a.entries[k];
  return out;
}

namespace detail {
inline void require_var_free(const AffineExpr& k) {
  if (!k.var_free()) throw UnsupportedError("product of two variable-dependent expressions is not affine");
}
}  // namespace detail

// Elementwise product where `k` is variable-free.
inline AffineExpr mul_elemwise(const AffineExpr& k, const AffineExpr& x, Shape out_shape) {
  detail::require_var_free(k);
  AffineExpr out(out_shape);
  for (Index j = 0; j < out_shape.cols; ++j)
    for (Index i = 0; i < out_shape.rows; ++i) out.at(i, j) = k.bcast(i, j).offset * x.bcast(i, j);
  return out;
}

// Matrix product; at least one side must be variable-free.
inline AffineExpr matmul(const AffineExpr& a, const AffineExpr& b) {
  const bool left_const = a.var_free();
  if (!left_const) detail::require_var_free(b);
  const Index rows = a.shape.rows;
  const Index inner = a.shape.cols;
  const Index cols = b.shape.cols;
  AffineExpr out(Shape{rows, cols});
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) {
      AffineEntry acc;
      for (Index l = 0; l < inner; ++l) {
        const auto& ea = a.at(i, l);
        const auto& eb = b.at(l, j);
        if (left_const) {
          if (ea.offset.is_zero()) continue;
          acc = acc + ea.offset * eb;
        } else {
          if (eb.offset.is_zero()) continue;
          acc = acc + eb.offset * ea;
        }
      }
      out.at(i, j) = std::move(acc);
    }
  }
  return out;
}

inline AffineExpr slice(const AffineExpr& a, IndexRange rows, IndexRange cols) {
  AffineExpr out(Shape{rows.length(), cols.length()});
  for (Index j = 0; j < cols.length(); ++j)
    for (Index i = 0; i < rows.length(); ++i) out.at(i, j) = a.at(rows.first + i, cols.first + j);
  return out;
}

inline AffineExpr transpose(const AffineExpr& a) {
  AffineExpr out(Shape{a.shape.cols, a.shape.rows});
  for (Index j = 0; j < a.shape.cols; ++j)
    for (Index i = 0; i < a.shape.rows; ++i) out.at(j, i) = a.at(i, j);
  return out;
}

inline AffineExpr sum_all(const AffineExpr& a) {
  AffineExpr out(Shape{1, 1});
  for (const auto& e : a.entries) out.entries[0] = out.entries[0] + e;
  return out;
}

inline AffineExpr hstack(const std::vector<AffineExpr>& parts, Shape out_shape) {
  AffineExpr out(out_shape);
  std::size_t pos = 0;
  for (const auto& p : parts)
    for (const auto& e : p.entries) out.entries[pos++] = e;
  return out;
}

inline AffineExpr vstack(const std::vector<AffineExpr>& parts, Shape out_shape) {
  AffineExpr out(out_shape);
  Index row0 = 0;
  for (const auto& p : parts) {
    for (Index j = 0; j < p.shape.cols; ++j)
      for (Index i = 0; i < p.shape.rows; ++i) out.at(row0 + i, j) = p.at(i, j);
    row0 += p.shape.rows;
  }
  return out;
}

}  // namespace paramqp::canon
