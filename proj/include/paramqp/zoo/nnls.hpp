#pragma once

#include "paramqp/dsl/problem.hpp"

namespace paramqp::zoo {

// minimize ||G x - h||^2  subject to  x >= 0
struct NnlsFamily {
  Index m = 0;
  Index n = 0;
  Variable x;
  Parameter G;
  Parameter h;
  Problem problem;
};

inline NnlsFamily build_nnls(Index m, Index n) {
  if (m < 1 || n < 1) throw DimensionError("build_nnls: m and n must be positive");
  NnlsFamily f;
  f.m = m;
  f.n = n;
  f.x = make_variable("x", {n, 1});
  f.G = make_parameter("G", {m, n});
  f.h = make_parameter("h", {m, 1});
  f.problem = Problem(Sense::minimize, sum_squares(matmul(f.G, f.x) - f.h), {ge(f.x)}, {f.x}, {f.G, f.h}, "nnls");
  return f;
}

}  // namespace paramqp::zoo
