#pragma once

// Immutable expression trees for parametrized convex QPs. Shape, sign and
// curvature are computed eagerly when a node is built, with parameters treated
// as constants (the usual DCP convention).

#include <algorithm>
#include <atomic>
#include <cctype>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "paramqp/error.hpp"
#include "paramqp/sparse/layout.hpp"

namespace paramqp {

struct Shape {
  Index rows = 1;
  Index cols = 1;

  Index size() const noexcept { return rows * cols; }
  bool is_scalar() const noexcept { return rows == 1 && cols == 1; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

inline std::string to_string(const Shape& s) { return std::to_string(s.rows) + "x" + std::to_string(s.cols); }

enum class Sign { zero, nonneg, nonpos, unknown };

// constant < affine < {convex, concave} < unknown
enum class Curvature { constant, affine, convex, concave, unknown };

inline std::string_view to_string(Curvature c) {
  switch (c) {
    case Curvature::constant: return "constant";
    case Curvature::affine: return "affine";
    case Curvature::convex: return "convex";
    case Curvature::concave: return "concave";
    case Curvature::unknown: return "unknown";
  }
  return "unknown";
}

inline std::string_view to_string(Sign s) {
  switch (s) {
    case Sign::zero: return "zero";
    case Sign::nonneg: return "nonneg";
    case Sign::nonpos: return "nonpos";
    case Sign::unknown: return "unknown";
  }
  return "unknown";
}

// Partial order of the curvature lattice.
inline bool curvature_leq(Curvature a, Curvature b) noexcept {
  if (a == b || b == Curvature::unknown) return true;
  if (a == Curvature::constant) return true;
  if (a == Curvature::affine) return b != Curvature::constant;
  return false;
}

inline Curvature curvature_join(Curvature a, Curvature b) noexcept {
  if (curvature_leq(a, b)) return b;
  if (curvature_leq(b, a)) return a;
  return Curvature::unknown;
}

inline Curvature curvature_flip(Curvature c) noexcept {
  if (c == Curvature::convex) return Curvature::concave;
  if (c == Curvature::concave) return Curvature::convex;
  return c;
}

inline bool is_affine(Curvature c) noexcept { return c == Curvature::constant || c == Curvature::affine; }
inline bool is_convex(Curvature c) noexcept { return is_affine(c) || c == Curvature::convex; }
inline bool is_concave(Curvature c) noexcept { return is_affine(c) || c == Curvature::concave; }

inline Sign sign_add(Sign a, Sign b) noexcept {
  if (a == Sign::zero) return b;
  if (b == Sign::zero) return a;
  return a == b ? a : Sign::unknown;
}

inline Sign sign_flip(Sign s) noexcept {
  if (s == Sign::nonneg) return Sign::nonpos;
  if (s == Sign::nonpos) return Sign::nonneg;
  return s;
}

inline Sign sign_mul(Sign a, Sign b) noexcept {
  if (a == Sign::zero || b == Sign::zero) return Sign::zero;
  if (a == Sign::unknown || b == Sign::unknown) return Sign::unknown;
  return a == b ? Sign::nonneg : Sign::nonpos;
}

inline bool is_nonneg(Sign s) noexcept { return s == Sign::zero || s == Sign::nonneg; }
inline bool is_nonpos(Sign s) noexcept { return s == Sign::zero || s == Sign::nonpos; }

// Valid C identifier: letters, digits and underscore, not starting with a digit.
inline bool is_identifier(std::string_view name) noexcept {
  if (name.empty() || std::isdigit(static_cast<unsigned char>(name.front()))) return false;
  return std::all_of(name.begin(), name.end(),
                     [](char ch) { return std::isalnum(static_cast<unsigned char>(ch)) || ch == '_'; });
}

namespace detail {
inline int next_symbol_id() {
  static std::atomic<int> counter{0};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

inline void check_declaration(std::string_view kind, const std::string& name, Shape shape) {
  if (!is_identifier(name)) throw SymbolError(std::string(kind) + " name '" + name + "' is not a valid identifier");
  if (shape.rows < 1 || shape.cols < 1)
    throw ShapeError(std::string(kind) + " '" + name + "' must be at least 1x1, got " + to_string(shape));
}
}  // namespace detail

struct VariableDecl {
  int id = 0;
  std::string name;
  Shape shape;
};

struct ParameterDecl {
  int id = 0;
  std::string name;
  Shape shape;
  Sign sign = Sign::unknown;
  std::optional<std::vector<Position>> sparsity;

  ParamBlock block() const { return ParamBlock{id, shape.rows, shape.cols, sparsity}; }
};

using Variable = std::shared_ptr<const VariableDecl>;
using Parameter = std::shared_ptr<const ParameterDecl>;

inline Variable make_variable(std::string name, Shape shape = {}) {
  detail::check_declaration("variable", name, shape);
  return std::make_shared<const VariableDecl>(VariableDecl{detail::next_symbol_id(), std::move(name), shape});
}

inline Parameter make_parameter(std::string name, Shape shape = {}, Sign sign = Sign::unknown,
                                std::optional<std::vector<Position>> sparsity = std::nullopt) {
  detail::check_declaration("parameter", name, shape);
  if (sign == Sign::zero) throw SymbolError("parameter '" + name + "' cannot be declared identically zero");
  if (sparsity) {
    auto& s = *sparsity;
    std::sort(s.begin(), s.end(), column_major_less);
    for (std::size_t k = 0; k < s.size(); ++k) {
      if (s[k].row < 0 || s[k].row >= shape.rows || s[k].col < 0 || s[k].col >= shape.cols)
        throw ShapeError("parameter '" + name + "': sparsity position out of bounds");
      if (k > 0 && s[k] == s[k - 1]) throw ShapeError("parameter '" + name + "': duplicate sparsity position");
    }
  }
  return std::make_shared<const ParameterDecl>(
      ParameterDecl{detail::next_symbol_id(), std::move(name), shape, sign, std::move(sparsity)});
}

// Diagonal sparsity pattern for an n x n matrix parameter.
inline std::vector<Position> diagonal_pattern(Index n) {
  std::vector<Position> out;
  for (Index i = 0; i < n; ++i) out.push_back({i, i});
  return out;
}

enum class Op {
  constant,
  variable,
  parameter,
  add,
  neg,
  mul_elemwise,
  matmul,
  index,
  transpose,
  sum,
  hstack,
  vstack,
  sum_squares,
  norm1,
  abs,
  pos_part,
  neg_part,
};

inline std::string_view op_name(Op op) {
  switch (op) {
    case Op::constant: return "const";
    case Op::variable: return "var";
    case Op::parameter: return "param";
    case Op::add: return "add";
    case Op::neg: return "neg";
    case Op::mul_elemwise: return "mul";
    case Op::matmul: return "matmul";
    case Op::index: return "index";
    case Op::transpose: return "transpose";
    case Op::sum: return "sum";
    case Op::hstack: return "hstack";
    case Op::vstack: return "vstack";
    case Op::sum_squares: return "sum_squares";
    case Op::norm1: return "norm1";
    case Op::abs: return "abs";
    case Op::pos_part: return "pos_part";
    case Op::neg_part: return "neg_part";
  }
  return "?";
}

inline bool is_nonlinear_atom(Op op) noexcept {
  return op == Op::sum_squares || op == Op::norm1 || op == Op::abs || op == Op::pos_part || op == Op::neg_part;
}

inline bool is_product(Op op) noexcept { return op == Op::mul_elemwise || op == Op::matmul; }

struct IndexRange {
  Index first = 0;
  Index last = 0;  // inclusive
  Index length() const noexcept { return last - first + 1; }
  friend bool operator==(const IndexRange&, const IndexRange&) = default;
};

class Expr;

namespace detail {
struct Node;
}

class Expr {
 public:
  Expr() = default;
  Expr(double scalar);  // NOLINT(google-explicit-constructor): scalar literals read naturally in models
  Expr(const Variable& v);   // NOLINT(google-explicit-constructor)
  Expr(const Parameter& p);  // NOLINT(google-explicit-constructor)

  bool valid() const noexcept { return node_ != nullptr; }
  Op op() const;
  Shape shape() const;
  const std::vector<Expr>& args() const;
  Curvature curvature() const;
  Sign sign() const;
  bool has_params() const;
  bool has_vars() const;
  // True when built from parameters and constants through affine operations only.
  bool param_affine() const;

  const std::vector<double>& constant_values() const;
  const Variable& variable() const;
  const Parameter& parameter() const;
  IndexRange row_range() const;
  IndexRange col_range() const;

  // Identity of the underlying node (shared subtrees compare equal).
  const void* id() const noexcept { return node_.get(); }

  static Expr make(detail::Node node);

 private:
  explicit Expr(std::shared_ptr<const detail::Node> n) : node_(std::move(n)) {}
  const detail::Node& node() const;

  std::shared_ptr<const detail::Node> node_;
};

namespace detail {
struct Node {
  Op op = Op::constant;
  Shape shape;
  std::vector<Expr> args;
  std::vector<double> constant;
  Variable var;
  Parameter param;
  IndexRange rows;
  IndexRange cols;
  Curvature curvature = Curvature::constant;
  Sign sign = Sign::zero;
  bool has_params = false;
  bool has_vars = false;
  bool param_affine = true;
};

inline Sign sign_of_values(std::span<const double> v) {
  bool pos = false;
  bool negv = false;
  for (double x : v) {
    if (x > 0) pos = true;
    if (x < 0) negv = true;
  }
  if (pos && negv) return Sign::unknown;
  if (pos) return Sign::nonneg;
  if (negv) return Sign::nonpos;
  return Sign::zero;
}

// Curvature of a product; DCP needs one operand to be constant.
inline Curvature product_curvature(const Expr& a, const Expr& b) {
  const Curvature ca = a.curvature();
  const Curvature cb = b.curvature();
  if (ca == Curvature::constant && cb == Curvature::constant) return Curvature::constant;
  const Expr* konst = nullptr;
  const Expr* other = nullptr;
  if (ca == Curvature::constant) {
    konst = &a;
    other = &b;
  } else if (cb == Curvature::constant) {
    konst = &b;
    other = &a;
  } else {
    return Curvature::unknown;
  }
  const Curvature c = other->curvature();
  if (is_affine(c)) return Curvature::affine;
  const Sign s = konst->sign();
  if (s == Sign::zero) return Curvature::constant;
  if (s == Sign::nonneg) return c;
  if (s == Sign::nonpos) return curvature_flip(c);
  return Curvature::unknown;
}

// Convex atom f applied to arg: convex when arg is affine, or when the atom's
// monotonicity matches arg's curvature.
inline Curvature convex_atom_curvature(Op op, const Expr& arg) {
  const Curvature c = arg.curvature();
  if (c == Curvature::constant) return Curvature::constant;
  if (c == Curvature::affine) return Curvature::convex;
  bool increasing = false;
  bool decreasing = false;
  switch (op) {
    case Op::pos_part: increasing = true; break;
    case Op::neg_part: decreasing = true; break;
    default:
      increasing = is_nonneg(arg.sign());
      decreasing = is_nonpos(arg.sign());
      break;
  }
  if (increasing && c == Curvature::convex) return Curvature::convex;
  if (decreasing && c == Curvature::concave) return Curvature::convex;
  return Curvature::unknown;
}

inline void finish_flags(Node& n) {
  for (const auto& a : n.args) {
    n.has_params = n.has_params || a.has_params();
    n.has_vars = n.has_vars || a.has_vars();
  }
}
}  // namespace detail

inline Expr Expr::make(detail::Node node) { return Expr(std::make_shared<const detail::Node>(std::move(node))); }

inline const detail::Node& Expr::node() const {
  if (!node_) throw Error("use of an empty expression");
  return *node_;
}

inline Op Expr::op() const { return node().op; }
inline Shape Expr::shape() const { return node().shape; }
inline const std::vector<Expr>& Expr::args() const { return node().args; }
inline Curvature Expr::curvature() const { return node().curvature; }
inline Sign Expr::sign() const { return node().sign; }
inline bool Expr::has_params() const { return node().has_params; }
inline bool Expr::has_vars() const { return node().has_vars; }
inline bool Expr::param_affine() const { return node().param_affine; }
inline const std::vector<double>& Expr::constant_values() const { return node().constant; }
inline const Variable& Expr::variable() const { return node().var; }
inline const Parameter& Expr::parameter() const { return node().param; }
inline IndexRange Expr::row_range() const { return node().rows; }
inline IndexRange Expr::col_range() const { return node().cols; }

// Dense constant with column-major values.
inline Expr constant(Shape shape, std::vector<double> values) {
  if (shape.rows < 1 || shape.cols < 1) throw ShapeError("constant must be at least 1x1");
  if (values.size() != static_cast<std::size_t>(shape.size()))
    throw ShapeError("constant: " + std::to_string(values.size()) + " values for shape " + to_string(shape));
  detail::Node n;
  n.op = Op::constant;
  n.shape = shape;
  n.sign = detail::sign_of_values(values);
  n.constant = std::move(values);
  n.curvature = Curvature::constant;
  return Expr::make(std::move(n));
}

inline Expr::Expr(double scalar) : Expr(constant(Shape{1, 1}, {scalar})) {}

inline Expr::Expr(const Variable& v) {
  if (!v) throw Error("null variable");
  detail::Node n;
  n.op = Op::variable;
  n.shape = v->shape;
  n.var = v;
  n.curvature = Curvature::affine;
  n.sign = Sign::unknown;
  n.has_vars = true;
  node_ = std::make_shared<const detail::Node>(std::move(n));
}

inline Expr::Expr(const Parameter& p) {
  if (!p) throw Error("null parameter");
  detail::Node n;
  n.op = Op::parameter;
  n.shape = p->shape;
  n.param = p;
  n.curvature = Curvature::constant;
  n.sign = p->sign;
  n.has_params = true;
  node_ = std::make_shared<const detail::Node>(std::move(n));
}

inline Expr add(std::vector<Expr> terms) {
  if (terms.empty()) throw ShapeError("add: needs at least one term");
  Shape shape{1, 1};
  for (const auto& t : terms) {
    if (t.shape().is_scalar()) continue;
    if (!shape.is_scalar() && !(shape == t.shape()))
      throw ShapeError("add: incompatible shapes " + to_string(shape) + " and " + to_string(t.shape()));
    shape = t.shape();
  }
  detail::Node n;
  n.op = Op::add;
  n.shape = shape;
  n.curvature = terms.front().curvature();
  n.sign = terms.front().sign();
  n.param_affine = true;
  for (std::size_t k = 0; k < terms.size(); ++k) {
    if (k > 0) {
      n.curvature = curvature_join(n.curvature, terms[k].curvature());
      n.sign = sign_add(n.sign, terms[k].sign());
    }
    n.param_affine = n.param_affine && terms[k].param_affine();
  }
  n.args = std::move(terms);
  detail::finish_flags(n);
  return Expr::make(std::move(n));
}

inline Expr neg(const Expr& e) {
  detail::Node n;
  n.op = Op::neg;
  n.shape = e.shape();
  n.curvature = curvature_flip(e.curvature());
  n.sign = sign_flip(e.sign());
  n.param_affine = e.param_affine();
  n.args = {e};
  detail::finish_flags(n);
  return Expr::make(std::move(n));
}

namespace detail {
// A product stays parameter-affine only when at most one operand carries
// parameters and that operand is itself parameter-affine.
inline bool product_param_affine(const Expr& a, const Expr& b) {
  if (a.has_params() && b.has_params()) return false;
  return a.param_affine() && b.param_affine();
}
}  // namespace detail

// Elementwise product; a 1x1 operand broadcasts.
inline Expr mul(const Expr& a, const Expr& b) {
  Shape shape;
  if (a.shape().is_scalar()) {
    shape = b.shape();
  } else if (b.shape().is_scalar() || a.shape() == b.shape()) {
    shape = a.shape();
  } else {
    throw ShapeError("mul: incompatible shapes " + to_string(a.shape()) + " and " + to_string(b.shape()));
  }
  detail::Node n;
  n.op = Op::mul_elemwise;
  n.shape = shape;
  n.curvature = detail::product_curvature(a, b);
  n.sign = sign_mul(a.sign(), b.sign());
  n.param_affine = detail::product_param_affine(a, b);
  n.args = {a, b};
  detail::finish_flags(n);
  return Expr::make(std::move(n));
}

inline Expr matmul(const Expr& a, const Expr& b) {
  if (a.shape().cols != b.shape().rows)
    throw ShapeError("matmul: inner dimensions differ (" + to_string(a.shape()) + " @ " + to_string(b.shape()) + ")");
  detail::Node n;
  n.op = Op::matmul;
  n.shape = Shape{a.shape().rows, b.shape().cols};
  n.curvature = detail::product_curvature(a, b);
  n.sign = sign_mul(a.sign(), b.sign());
  n.param_affine = detail::product_param_affine(a, b);
  n.args = {a, b};
  detail::finish_flags(n);
  return Expr::make(std::move(n));
}

// Inclusive, zero-based row and column bounds.
inline Expr index(const Expr& e, IndexRange rows, IndexRange cols) {
  const Shape s = e.shape();
  if (rows.first < 0 || rows.last < rows.first || rows.last >= s.rows || cols.first < 0 || cols.last < cols.first ||
      cols.last >= s.cols)
    throw ShapeError("index: range [" + std::to_string(rows.first) + ":" + std::to_string(rows.last) + ", " +
                     std::to_string(cols.first) + ":" + std::to_string(cols.last) + "] out of bounds for " +
                     to_string(s));
  detail::Node n;
  n.op = Op::index;
  n.shape = Shape{rows.length(), cols.length()};
  n.rows = rows;
  n.cols = cols;
  n.curvature = e.curvature();
  n.sign = e.sign();
  n.param_affine = e.param_affine();
  n.args = {e};
  detail::finish_flags(n);
  return Expr::make(std::move(n));
}

inline Expr index(const Expr& e, Index r0, Index r1, Index c0, Index c1) {
  return index(e, IndexRange{r0, r1}, IndexRange{c0, c1});
}

// Single column c.
inline Expr column(const Expr& e, Index c) { return index(e, 0, e.shape().rows - 1, c, c); }

inline Expr transpose(const Expr& e) {
  detail::Node n;
  n.op = Op::transpose;
  n.shape = Shape{e.shape().cols, e.shape().rows};
  n.curvature = e.curvature();
  n.sign = e.sign();
  n.param_affine = e.param_affine();
  n.args = {e};
  detail::finish_flags(n);
  return Expr::make(std::move(n));
}

inline Expr sum(const Expr& e) {
  detail::Node n;
  n.op = Op::sum;
  n.shape = Shape{1, 1};
  n.curvature = e.curvature();
  n.sign = e.sign();
  n.param_affine = e.param_affine();
  n.args = {e};
  detail::finish_flags(n);
  return Expr::make(std::move(n));
}

namespace detail {
inline Expr stack(Op op, std::vector<Expr> parts) {
  if (parts.empty()) throw ShapeError(std::string(op_name(op)) + ": needs at least one argument");
  Shape shape = parts.front().shape();
  Curvature c = parts.front().curvature();
  Sign s = parts.front().sign();
  bool pa = parts.front().param_affine();
  for (std::size_t k = 1; k < parts.size(); ++k) {
    const Shape p = parts[k].shape();
    if (op == Op::hstack) {
      if (p.rows != shape.rows) throw ShapeError("hstack: row counts differ");
      shape.cols += p.cols;
    } else {
      if (p.cols != shape.cols) throw ShapeError("vstack: column counts differ");
      shape.rows += p.rows;
    }
    c = curvature_join(c, parts[k].curvature());
    s = sign_add(s, parts[k].sign());
    pa = pa && parts[k].param_affine();
  }
  Node n;
  n.op = op;
  n.shape = shape;
  n.curvature = c;
  n.sign = s;
  n.param_affine = pa;
  n.args = std::move(parts);
  finish_flags(n);
  return Expr::make(std::move(n));
}

inline Expr convex_atom(Op op, const Expr& arg, Shape shape, Sign sign) {
  Node n;
  n.op = op;
  n.shape = shape;
  n.curvature = convex_atom_curvature(op, arg);
  n.sign = sign;
  // Nonlinear in its argument, so any parameter inside stops being affine.
  n.param_affine = !arg.has_params();
  n.args = {arg};
  finish_flags(n);
  return Expr::make(std::move(n));
}
}  // namespace detail

inline Expr hstack(std::vector<Expr> parts) { return detail::stack(Op::hstack, std::move(parts)); }
inline Expr vstack(std::vector<Expr> parts) { return detail::stack(Op::vstack, std::move(parts)); }

inline Expr sum_squares(const Expr& e) { return detail::convex_atom(Op::sum_squares, e, Shape{1, 1}, Sign::nonneg); }
inline Expr norm1(const Expr& e) { return detail::convex_atom(Op::norm1, e, Shape{1, 1}, Sign::nonneg); }
inline Expr abs(const Expr& e) { return detail::convex_atom(Op::abs, e, e.shape(), Sign::nonneg); }
// max(e, 0) elementwise.
inline Expr pos_part(const Expr& e) { return detail::convex_atom(Op::pos_part, e, e.shape(), Sign::nonneg); }
// max(-e, 0) elementwise.
inline Expr neg_part(const Expr& e) { return detail::convex_atom(Op::neg_part, e, e.shape(), Sign::nonneg); }

inline Expr operator+(const Expr& a, const Expr& b) { return add({a, b}); }
inline Expr operator-(const Expr& a, const Expr& b) { return add({a, neg(b)}); }
inline Expr operator-(const Expr& a) { return neg(a); }
inline Expr operator*(const Expr& a, const Expr& b) { return mul(a, b); }

inline Curvature curvature(const Expr& e) { return e.curvature(); }

// Structural equality: same operators, shapes, constants, and symbols matched
// by name and declaration.
inline bool structurally_equal(const Expr& a, const Expr& b) {
  if (a.id() == b.id()) return true;
  if (a.op() != b.op() || !(a.shape() == b.shape()) || a.args().size() != b.args().size()) return false;
  switch (a.op()) {
    case Op::constant:
      if (a.constant_values() != b.constant_values()) return false;
      break;
    case Op::variable:
      if (a.variable()->name != b.variable()->name) return false;
      break;
    case Op::parameter: {
      const auto& pa = *a.parameter();
      const auto& pb = *b.parameter();
      if (pa.name != pb.name || pa.sign != pb.sign || pa.sparsity != pb.sparsity) return false;
      break;
    }
    case Op::index:
      if (!(a.row_range() == b.row_range()) || !(a.col_range() == b.col_range())) return false;
      break;
    default: break;
  }
  for (std::size_t k = 0; k < a.args().size(); ++k)
    if (!structurally_equal(a.args()[k], b.args()[k])) return false;
  return true;
}

// Short infix rendering for diagnostics.
inline std::string describe(const Expr& e) {
  auto list = [&](std::string_view sep) {
    std::string out;
    for (std::size_t k = 0; k < e.args().size(); ++k) {
      if (k) out += sep;
      out += describe(e.args()[k]);
    }
    return out;
  };
  switch (e.op()) {
    case Op::constant:
      if (e.shape().is_scalar()) {
        std::string s = std::to_string(e.constant_values().front());
        s.erase(s.find_last_not_of('0') + 1);
        if (!s.empty() && s.back() == '.') s.pop_back();
        return s;
      }
      return "const(" + to_string(e.shape()) + ")";
    case Op::variable: return e.variable()->name;
    case Op::parameter: return e.parameter()->name;
    case Op::add: return "(" + list(" + ") + ")";
    case Op::neg: return "-" + describe(e.args()[0]);
    case Op::mul_elemwise: return "(" + list(" * ") + ")";
    case Op::matmul: return "(" + list(" @ ") + ")";
    case Op::index:
      return describe(e.args()[0]) + "[" + std::to_string(e.row_range().first) + ":" +
             std::to_string(e.row_range().last) + "," + std::to_string(e.col_range().first) + ":" +
             std::to_string(e.col_range().last) + "]";
    case Op::transpose: return describe(e.args()[0]) + "^T";
    default: return std::string(op_name(e.op())) + "(" + list(", ") + ")";
  }
}

}  // namespace paramqp
