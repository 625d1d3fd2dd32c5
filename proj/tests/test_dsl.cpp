#include <gtest/gtest.h>

#include "paramqp/dsl/dpp.hpp"
#include "paramqp/dsl/expr.hpp"
#include "paramqp/dsl/problem.hpp"

using namespace paramqp;

namespace {

struct Nnls {
  Variable x = make_variable("x", {3, 1});
  Parameter G = make_parameter("G", {4, 3});
  Parameter h = make_parameter("h", {4, 1});
  Expr objective() const { return sum_squares(matmul(G, x) - h); }
};

}  // namespace

TEST(Curvature, LeastSquaresIsConvex) {
  Nnls f;
  EXPECT_EQ(curvature(f.objective()), Curvature::convex);
}

TEST(Curvature, VariableIsAffine) {
  const auto x = make_variable("x", {2, 1});
  EXPECT_EQ(curvature(Expr(x)), Curvature::affine);
}

TEST(Curvature, NegatedSumSquaresIsConcave) {
  const auto x = make_variable("x", {2, 1});
  EXPECT_EQ(curvature(-sum_squares(x)), Curvature::concave);
}

TEST(Curvature, ConstantsAndParameters) {
  const auto p = make_parameter("p", {2, 1});
  EXPECT_EQ(curvature(Expr(p)), Curvature::constant);
  EXPECT_EQ(curvature(Expr(3.0)), Curvature::constant);
  EXPECT_EQ(curvature(abs(Expr(p))), Curvature::constant);
}

TEST(Curvature, SignRules) {
  const auto x = make_variable("x", {2, 1});
  const auto pos = make_parameter("k", {1, 1}, Sign::nonneg);
  const auto any = make_parameter("a", {1, 1});
  EXPECT_EQ(curvature(pos * abs(x)), Curvature::convex);
  EXPECT_EQ(curvature(-2.0 * abs(x)), Curvature::concave);
  EXPECT_EQ(curvature(any * abs(x)), Curvature::unknown);
  EXPECT_EQ(curvature(abs(x) + (-1.0) * abs(x)), Curvature::unknown);
  EXPECT_EQ(curvature(pos_part(abs(x))), Curvature::convex);
  EXPECT_EQ(curvature(neg_part(-abs(x))), Curvature::convex);
  EXPECT_EQ(curvature(abs(abs(x))), Curvature::convex);
  // -|x| is nonpos, where abs is decreasing.
  EXPECT_EQ(curvature(abs(-abs(x))), Curvature::convex);
  EXPECT_EQ(curvature(abs(Expr(x) - abs(x))), Curvature::unknown);
}

TEST(Curvature, LatticeOrder) {
  using C = Curvature;
  EXPECT_TRUE(curvature_leq(C::constant, C::affine));
  EXPECT_TRUE(curvature_leq(C::affine, C::convex));
  EXPECT_TRUE(curvature_leq(C::affine, C::concave));
  EXPECT_TRUE(curvature_leq(C::convex, C::unknown));
  EXPECT_FALSE(curvature_leq(C::convex, C::concave));
  EXPECT_EQ(curvature_join(C::convex, C::concave), C::unknown);
}

// Replacing an affine child with a convex one never lowers curvature.
TEST(Curvature, MonotoneUnderSubstitution) {
  const auto x = make_variable("x", {3, 1});
  const auto k = make_parameter("k", {1, 1}, Sign::nonneg);
  const Expr affine_child = Expr(x) + 1.0;
  const Expr convex_child = abs(x);
  const std::vector<std::function<Expr(const Expr&)>> contexts{
      [](const Expr& c) { return sum(c); },
      [](const Expr& c) { return -c; },
      [&](const Expr& c) { return k * c; },
      [&](const Expr& c) { return c + Expr(x); },
      [](const Expr& c) { return abs(c); },
      [](const Expr& c) { return pos_part(c); },
      [](const Expr& c) { return neg_part(c); },
      [](const Expr& c) { return norm1(c); },
      [](const Expr& c) { return vstack({c, c}); },
      [](const Expr& c) { return index(c, 0, 1, 0, 0); },
      [](const Expr& c) { return transpose(c); },
  };
  for (const auto& ctx : contexts) {
    const Curvature before = ctx(affine_child).curvature();
    const Curvature after = ctx(convex_child).curvature();
    EXPECT_TRUE(curvature_leq(before, after)) << to_string(before) << " -> " << to_string(after);
  }
}

TEST(Shapes, BinaryOperationsValidate) {
  const auto x = make_variable("x", {3, 1});
  const auto y = make_variable("y", {2, 1});
  const auto M = make_parameter("M", {2, 3});
  EXPECT_THROW(Expr(x) + Expr(y), ShapeError);
  EXPECT_THROW(matmul(x, M), ShapeError);
  EXPECT_EQ(matmul(M, x).shape(), (Shape{2, 1}));
  EXPECT_EQ((Expr(x) + 1.0).shape(), (Shape{3, 1}));
  EXPECT_THROW(index(x, 0, 3, 0, 0), ShapeError);
  EXPECT_THROW(hstack({x, y}), ShapeError);
  EXPECT_EQ(vstack({x, y}).shape(), (Shape{5, 1}));
  EXPECT_EQ(norm1(x).shape(), (Shape{1, 1}));
  EXPECT_EQ(abs(M).shape(), (Shape{2, 3}));
}

TEST(Symbols, RejectInvalidDeclarations) {
  EXPECT_THROW(make_variable("1x", {1, 1}), SymbolError);
  EXPECT_THROW(make_variable("x-y", {1, 1}), SymbolError);
  EXPECT_THROW(make_variable("x", {0, 1}), ShapeError);
  EXPECT_THROW(make_parameter("P", {2, 2}, Sign::unknown, std::vector<Position>{{2, 0}}), ShapeError);
  EXPECT_THROW(make_parameter("P", {2, 2}, Sign::unknown, std::vector<Position>{{0, 0}, {0, 0}}), ShapeError);
  EXPECT_NO_THROW(make_variable("_x1", {1, 1}));
}

TEST(ProblemValidation, RejectsNonScalarObjective) {
  const auto x = make_variable("x", {2, 1});
  EXPECT_THROW(Problem(Sense::minimize, Expr(x), {}), ShapeError);
}

TEST(ProblemValidation, RejectsUndeclaredSymbol) {
  const auto x = make_variable("x", {2, 1});
  const auto Q = make_parameter("Q", {2, 1});
  EXPECT_THROW(Problem(Sense::minimize, sum_squares(Expr(x) - Expr(Q)), {}, {x}, {}), SymbolError);
}

TEST(ProblemValidation, RejectsDuplicateNames) {
  const auto x1 = make_variable("x", {1, 1});
  const auto x2 = make_variable("x", {1, 1});
  EXPECT_THROW(Problem(Sense::minimize, sum_squares(Expr(x1) + Expr(x2)), {}), SymbolError);
}

TEST(ProblemValidation, EnforcesDcp) {
  const auto x = make_variable("x", {2, 1});
  EXPECT_THROW(Problem(Sense::minimize, -sum_squares(x), {}), DcpError);
  EXPECT_THROW(Problem(Sense::maximize, sum_squares(x), {}), DcpError);
  EXPECT_THROW(Problem(Sense::minimize, sum(x), {eq(abs(x), 1.0)}), DcpError);
  EXPECT_THROW(Problem(Sense::minimize, sum(x), {ge(abs(x), 1.0)}), DcpError);
  EXPECT_NO_THROW(Problem(Sense::minimize, sum(x), {le(abs(x), 1.0)}));
  EXPECT_NO_THROW(Problem(Sense::maximize, -sum_squares(x), {}));
}

TEST(ProblemValidation, MaximizeIsNormalized) {
  const auto x = make_variable("x", {2, 1});
  const Problem p(Sense::maximize, -sum_squares(x), {});
  EXPECT_EQ(p.minimize_objective().op(), Op::neg);
  EXPECT_EQ(p.minimize_objective().curvature(), Curvature::convex);
}

TEST(ProblemValidation, SingleVariableNoConstraints) {
  const auto x = make_variable("x", {1, 1});
  const Problem p(Sense::minimize, sum_squares(x), {});
  EXPECT_EQ(p.variables().size(), 1u);
  EXPECT_TRUE(p.parameters().empty());
}

TEST(Constraints, GreaterEqualNormalizesToNonposOfNeg) {
  const auto x = make_variable("x", {3, 1});
  const Constraint c = ge(x);
  EXPECT_EQ(c.kind, ConstraintKind::nonpos);
  ASSERT_EQ(c.expr.op(), Op::neg);
  EXPECT_EQ(c.expr.args()[0].op(), Op::variable);
  EXPECT_EQ(le(x, 2.0).expr.op(), Op::add);
  EXPECT_EQ(eq(x).kind, ConstraintKind::eq_zero);
}

TEST(Dpp, LeastSquaresIsCompliant) {
  Nnls f;
  const Problem p(Sense::minimize, f.objective(), {ge(f.x)});
  EXPECT_TRUE(check_dpp(p).compliant);
}

TEST(Dpp, NoParametersIsCompliant) {
  const auto x = make_variable("x", {2, 1});
  const Problem p(Sense::minimize, sum_squares(x), {le(sum(x), 1.0)});
  EXPECT_TRUE(check_dpp(p).compliant);
}

TEST(Dpp, TripleParameterProductIsFlagged) {
  const auto u = make_variable("u", {1, 1});
  const auto gamma = make_parameter("gamma", {1, 1}, Sign::nonneg);
  const auto m = make_parameter("m", {1, 1}, Sign::nonneg);
  const auto g = make_parameter("g", {1, 1}, Sign::nonneg);
  const Expr gmg = Expr(gamma) * m * g;
  const Problem p(Sense::minimize, sum_squares(u), {le(Expr(u), gmg)});
  const auto r = check_dpp(p);
  ASSERT_FALSE(r.compliant);
  bool found_root_product = false;
  for (const auto& v : r.violations) {
    EXPECT_EQ(v.path.rfind("constraints[0]", 0), 0u) << v.path;
    if (structurally_equal(v.node, gmg)) found_root_product = true;
  }
  EXPECT_TRUE(found_root_product);
}

TEST(Dpp, ParameterTimesVariableIsCompliant) {
  const auto x = make_variable("x", {3, 1});
  const auto F = make_parameter("F", {3, 2});
  const auto k = make_parameter("k", {3, 1}, Sign::nonneg);
  const Problem p(Sense::minimize, sum_squares(matmul(transpose(F), x)) + matmul(transpose(k), abs(x)), {});
  EXPECT_TRUE(check_dpp(p).compliant);
}

TEST(Dpp, ParameterInsideAtomMultipliedIsFlagged) {
  const auto x = make_variable("x", {1, 1});
  const auto a = make_parameter("a", {1, 1}, Sign::nonneg);
  const auto b = make_parameter("b", {1, 1}, Sign::nonneg);
  // b * |a x| is convex but not parameter-affine.
  const Problem p(Sense::minimize, Expr(b) * abs(Expr(a) * x), {});
  const auto r = check_dpp(p);
  ASSERT_FALSE(r.compliant);
  EXPECT_EQ(r.violations.front().path, "objective");
}

TEST(Evaluate, MatchesHandComputation) {
  const auto x = make_variable("x", {2, 1});
  const auto G = make_parameter("G", {2, 2});
  Assignment a;
  a.set(x, {1.0, -2.0});
  a.set(G, {1.0, 3.0, 2.0, 4.0});  // [[1,2],[3,4]]
  EXPECT_EQ(evaluate(matmul(G, x), a), (std::vector<double>{-3.0, -5.0}));
  EXPECT_EQ(evaluate(sum_squares(matmul(G, x)), a), (std::vector<double>{34.0}));
  EXPECT_EQ(evaluate(norm1(x), a), (std::vector<double>{3.0}));
  EXPECT_EQ(evaluate(neg_part(x), a), (std::vector<double>{0.0, 2.0}));
  EXPECT_EQ(evaluate(pos_part(x), a), (std::vector<double>{1.0, 0.0}));
  EXPECT_EQ(evaluate(index(G, 1, 1, 0, 1), a), (std::vector<double>{3.0, 4.0}));
  EXPECT_EQ(evaluate(transpose(G), a), (std::vector<double>{1.0, 2.0, 3.0, 4.0}));
  EXPECT_EQ(evaluate(hstack({x, x}), a), (std::vector<double>{1.0, -2.0, 1.0, -2.0}));
}

TEST(Describe, RendersInfix) {
  const auto x = make_variable("x", {1, 1});
  const auto g = make_parameter("g", {1, 1});
  EXPECT_NE(describe(Expr(g) * x).find("g"), std::string::npos);
}
