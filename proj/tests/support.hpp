#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "paramqp/sparse/csc.hpp"

namespace testing_support {

using paramqp::CscMatrix;
using paramqp::Index;
using paramqp::Triplet;

inline std::vector<double> randn(std::mt19937_64& rng, std::size_t n, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

inline std::vector<double> uniform(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

inline CscMatrix random_csc(std::mt19937_64& rng, Index rows, Index cols, double density) {
  std::bernoulli_distribution keep(density);
  std::normal_distribution<double> g;
  std::vector<Triplet> t;
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i)
      if (keep(rng)) t.push_back({i, j, g(rng)});
  return paramqp::build_csc(t, rows, cols);
}

inline double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (const double x : v) m = std::max(m, std::abs(x));
  return m;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// max_i |a_i - b_i| / max(1e-300, max|b|)
inline double rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
  const double scale = std::max(1e-300, std::max(max_abs(a), max_abs(b)));
  return max_abs_diff(a, b) / scale;
}

// Dense triple-loop product of a column-major matrix.
inline std::vector<double> dense_matvec(const std::vector<double>& m, Index rows, Index cols,
                                        const std::vector<double>& v) {
  std::vector<double> out(static_cast<std::size_t>(rows), 0.0);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) out[i] += m[static_cast<std::size_t>(i + j * rows)] * v[j];
  return out;
}

}  // namespace testing_support
