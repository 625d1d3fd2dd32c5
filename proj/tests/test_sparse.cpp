#include <gtest/gtest.h>

#include <numeric>

#include "paramqp/sparse/csc.hpp"
#include "paramqp/sparse/layout.hpp"
#include "support.hpp"

using namespace paramqp;
using namespace testing_support;

TEST(Spmv, IdentityReturnsInput) {
  const auto I = identity_csc(3);
  EXPECT_TRUE(csc_valid(I));
  EXPECT_EQ(spmv(I, std::vector<double>{1, 2, 3}), (std::vector<double>{1, 2, 3}));
}

TEST(Spmv, HandExpansion) {
  const std::vector<double> dense{0, 0, 2, 0};  // [[0,2],[0,0]] column-major
  const auto M = from_dense(dense, 2, 2);
  EXPECT_EQ(M.nnz(), 1);
  EXPECT_EQ(spmv(M, std::vector<double>{5, 7}), (std::vector<double>{14, 0}));
}

TEST(Spmv, MatchesDenseOracle) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto M = random_csc(rng, 20, 15, 0.3);
    ASSERT_TRUE(csc_valid(M)) << csc_violation(M);
    const auto v = randn(rng, 15);
    const auto ref = dense_matvec(to_dense(M), 20, 15, v);
    EXPECT_LT(rel_diff(spmv(M, v), ref), 1e-12);
  }
}

TEST(Spmv, RejectsLengthMismatch) {
  const auto I = identity_csc(3);
  EXPECT_THROW(spmv(I, std::vector<double>{1, 2}), DimensionError);
}

TEST(Spmv, Linearity) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const auto M = random_csc(rng, 12, 9, 0.4);
    const auto u = randn(rng, 9);
    const auto v = randn(rng, 9);
    const double a = 0.7, b = -1.3;
    std::vector<double> w(9);
    for (int i = 0; i < 9; ++i) w[i] = a * u[i] + b * v[i];
    const auto mu = spmv(M, u);
    const auto mv = spmv(M, v);
    std::vector<double> expect(12);
    for (int i = 0; i < 12; ++i) expect[i] = a * mu[i] + b * mv[i];
    EXPECT_LT(rel_diff(spmv(M, w), expect), 1e-12);
  }
}

TEST(SpmvColumns, AllColumnsEqualsSpmv) {
  std::mt19937_64 rng(13);
  const auto M = random_csc(rng, 10, 8, 0.4);
  const auto v = randn(rng, 8);
  std::vector<Index> all(8);
  std::iota(all.begin(), all.end(), 0);
  std::vector<double> acc(10, 0.0);
  spmv_columns(M, v, all, acc);
  EXPECT_EQ(acc, spmv(M, v));
}

TEST(SpmvColumns, EmptySetLeavesAccumulator) {
  std::mt19937_64 rng(14);
  const auto M = random_csc(rng, 6, 5, 0.5);
  const auto v = randn(rng, 5);
  std::vector<double> acc{1, 2, 3, 4, 5, 6};
  const auto before = acc;
  spmv_columns(M, v, std::span<const Index>{}, acc);
  EXPECT_EQ(acc, before);
}

TEST(SpmvColumns, SplitIsAdditive) {
  std::mt19937_64 rng(15);
  std::bernoulli_distribution coin(0.5);
  for (int trial = 0; trial < 30; ++trial) {
    const auto M = random_csc(rng, 20, 15, 0.3);
    const auto v = randn(rng, 15);
    std::vector<Index> s, sbar;
    for (Index j = 0; j < 15; ++j) (coin(rng) ? s : sbar).push_back(j);
    std::vector<double> acc(20, 0.0);
    spmv_columns(M, v, s, acc);
    spmv_columns(M, v, sbar, acc);
    EXPECT_LT(rel_diff(acc, spmv(M, v)), 1e-12);
  }
}

TEST(SpmvColumns, RejectsOutOfRange) {
  const auto I = identity_csc(3);
  std::vector<double> acc(3, 0.0);
  const std::vector<Index> bad{0, 3};
  EXPECT_THROW(spmv_columns(I, std::vector<double>{1, 1, 1}, bad, acc), DimensionError);
}

TEST(BuildCsc, SumsDuplicates) {
  const std::vector<Triplet> t{{0, 0, 1.0}, {0, 0, 2.0}};
  const auto M = build_csc(t, 1, 1);
  ASSERT_EQ(M.nnz(), 1);
  EXPECT_EQ(M.values[0], 3.0);
}

TEST(BuildCsc, EmptyPattern) {
  const auto M = build_csc(std::vector<Triplet>{}, 2, 2);
  EXPECT_EQ(M.col_ptr, (std::vector<Index>{0, 0, 0}));
  EXPECT_TRUE(csc_valid(M));
}

TEST(BuildCsc, KeepsExplicitZeros) {
  const std::vector<Triplet> t{{1, 0, 0.0}, {0, 1, 4.0}};
  const auto M = build_csc(t, 2, 2);
  EXPECT_EQ(M.nnz(), 2);
  EXPECT_EQ(M.row_idx, (std::vector<Index>{1, 0}));
}

TEST(BuildCsc, RejectsOutOfBounds) {
  const std::vector<Triplet> t{{2, 0, 1.0}};
  EXPECT_THROW(build_csc(t, 2, 2), DimensionError);
}

TEST(BuildCsc, DenseRoundTrip) {
  // Sized like a horizon-6 MPC constraint block.
  std::mt19937_64 rng(16);
  std::uniform_int_distribution<Index> ri(0, 88), ci(0, 62);
  std::vector<Triplet> t;
  std::vector<double> dense(89 * 63, 0.0);
  for (int k = 0; k < 600; ++k) {
    const Index i = ri(rng), j = ci(rng);
    const double v = std::normal_distribution<double>()(rng);
    t.push_back({i, j, v});
    dense[static_cast<std::size_t>(i + j * 89)] += v;
  }
  const auto M = build_csc(t, 89, 63);
  EXPECT_TRUE(csc_valid(M)) << csc_violation(M);
  EXPECT_EQ(to_dense(M), dense);
  const auto back = from_dense(to_dense(M), 89, 63, false);
  EXPECT_EQ(to_dense(back), dense);
}

TEST(CscValidator, DetectsViolations) {
  auto M = identity_csc(3);
  M.row_idx[1] = 5;
  EXPECT_FALSE(csc_valid(M));
  auto N = build_csc(std::vector<Triplet>{{0, 0, 1}, {1, 0, 1}}, 2, 1);
  std::swap(N.row_idx[0], N.row_idx[1]);
  EXPECT_FALSE(csc_valid(N));
  auto Q = identity_csc(2);
  Q.col_ptr[0] = 1;
  EXPECT_FALSE(csc_valid(Q));
}

TEST(Transpose, MatchesDense) {
  std::mt19937_64 rng(17);
  const auto M = random_csc(rng, 7, 4, 0.5);
  const auto T = transpose(M);
  EXPECT_TRUE(csc_valid(T));
  const auto d = to_dense(M), dt = to_dense(T);
  for (Index i = 0; i < 7; ++i)
    for (Index j = 0; j < 4; ++j) EXPECT_EQ(d[i + j * 7], dt[j + i * 4]);
}

TEST(SymUpper, MatchesFullSymmetric) {
  // Upper triangle of [[2,1],[1,3]].
  const auto U = build_csc(std::vector<Triplet>{{0, 0, 2}, {0, 1, 1}, {1, 1, 3}}, 2, 2);
  std::vector<double> out(2);
  spmv_sym_upper_into(U, std::vector<double>{1, 2}, out);
  EXPECT_EQ(out, (std::vector<double>{4, 7}));
}

TEST(FlattenLayout, DenseColumnMajorOffsets) {
  FlattenLayout L({ParamBlock{1, 2, 3, std::nullopt}, ParamBlock{2, 1, 1, std::nullopt}});
  EXPECT_EQ(L.size(), 7);
  EXPECT_EQ(*L.index(1, 1, 0), 1);
  EXPECT_EQ(*L.index(1, 0, 1), 2);
  EXPECT_EQ(*L.index(2, 0, 0), 6);
}

TEST(FlattenLayout, IsBijection) {
  std::vector<Position> diag{{2, 2}, {0, 0}, {1, 1}};
  FlattenLayout L({ParamBlock{1, 3, 2, std::nullopt}, ParamBlock{2, 3, 3, diag}, ParamBlock{3, 4, 1, std::nullopt}});
  EXPECT_EQ(L.size(), 6 + 3 + 4);
  std::vector<bool> hit(static_cast<std::size_t>(L.size()), false);
  for (const auto& b : L.blocks())
    for (Index j = 0; j < b.cols; ++j)
      for (Index i = 0; i < b.rows; ++i) {
        const auto k = L.index(b.id, i, j);
        if (!k) continue;
        ASSERT_FALSE(hit[*k]);
        hit[*k] = true;
        const auto [id, pos] = L.entry(*k);
        EXPECT_EQ(id, b.id);
        EXPECT_EQ(pos, (Position{i, j}));
      }
  EXPECT_TRUE(std::all_of(hit.begin(), hit.end(), [](bool h) { return h; }));
  EXPECT_FALSE(L.index(2, 0, 1).has_value());
}

TEST(FlattenLayout, ScatterGatherRoundTrip) {
  std::vector<Position> diag{{0, 0}, {1, 1}};
  FlattenLayout L({ParamBlock{4, 2, 2, diag}});
  std::vector<double> theta(2);
  L.scatter(4, std::vector<double>{3, 0, 0, 5}, theta);
  EXPECT_EQ(theta, (std::vector<double>{3, 5}));
  EXPECT_EQ(L.gather(4, theta), (std::vector<double>{3, 0, 0, 5}));
  EXPECT_THROW(L.scatter(4, std::vector<double>{3, 1, 0, 5}, theta), DimensionError);
}

TEST(FlattenLayout, RejectsBadSparsity) {
  EXPECT_THROW(FlattenLayout({ParamBlock{1, 2, 2, std::vector<Position>{{2, 0}}}}), DimensionError);
  EXPECT_THROW(FlattenLayout({ParamBlock{1, 2, 2, std::vector<Position>{{1, 0}, {1, 0}}}}), DimensionError);
}
