#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "paramqp/dsl/expr.hpp"

namespace paramqp {

enum class Sense { minimize, maximize };

enum class ConstraintKind {
  eq_zero,  // expr == 0, expr affine
  nonpos,   // expr <= 0, expr convex
};

struct Constraint {
  ConstraintKind kind = ConstraintKind::eq_zero;
  Expr expr;
};

namespace detail {
inline bool is_zero_constant(const Expr& e) {
  if (e.op() != Op::constant) return false;
  for (double v : e.constant_values())
    if (v != 0.0) return false;
  return true;
}
}  // namespace detail

// lhs == rhs
inline Constraint eq(const Expr& lhs, const Expr& rhs = 0.0) {
  return {ConstraintKind::eq_zero, detail::is_zero_constant(rhs) ? lhs : lhs - rhs};
}

// lhs <= rhs
inline Constraint le(const Expr& lhs, const Expr& rhs = 0.0) {
  return {ConstraintKind::nonpos, detail::is_zero_constant(rhs) ? lhs : lhs - rhs};
}

// lhs >= rhs, stored as -(lhs - rhs) <= 0.
inline Constraint ge(const Expr& lhs, const Expr& rhs = 0.0) {
  return {ConstraintKind::nonpos, neg(detail::is_zero_constant(rhs) ? lhs : lhs - rhs)};
}

// Depth-first visit of every node, parents before children.
inline void visit(const Expr& e, const std::function<void(const Expr&)>& fn) {
  fn(e);
  for (const auto& a : e.args()) visit(a, fn);
}

class Problem {
 public:
  Problem() = default;

  // Validates symbol declarations and DCP rules. Maximization is normalized
  // here: minimize_objective() is the negated objective.
  Problem(Sense sense, Expr objective, std::vector<Constraint> constraints, std::vector<Variable> variables,
          std::vector<Parameter> parameters, std::string name = "problem")
      : name_(std::move(name)),
        sense_(sense),
        objective_(std::move(objective)),
        constraints_(std::move(constraints)),
        variables_(std::move(variables)),
        parameters_(std::move(parameters)) {
    validate();
  }

  // Declarations are collected in first-appearance order (objective first).
  Problem(Sense sense, Expr objective, std::vector<Constraint> constraints, std::string name = "problem")
      : name_(std::move(name)), sense_(sense), objective_(std::move(objective)), constraints_(std::move(constraints)) {
    std::set<int> seen;
    auto collect = [&](const Expr& e) {
      visit(e, [&](const Expr& n) {
        if (n.op() == Op::variable && seen.insert(n.variable()->id).second) variables_.push_back(n.variable());
        if (n.op() == Op::parameter && seen.insert(n.parameter()->id).second) parameters_.push_back(n.parameter());
      });
    };
    collect(objective_);
    for (const auto& c : constraints_) collect(c.expr);
    validate();
  }

  const std::string& name() const noexcept { return name_; }
  Sense sense() const noexcept { return sense_; }
  const Expr& objective() const noexcept { return objective_; }
  const Expr& minimize_objective() const noexcept { return min_objective_; }
  const std::vector<Constraint>& constraints() const noexcept { return constraints_; }
  const std::vector<Variable>& variables() const noexcept { return variables_; }
  const std::vector<Parameter>& parameters() const noexcept { return parameters_; }

  const Variable* find_variable(const std::string& name) const {
    for (const auto& v : variables_)
      if (v->name == name) return &v;
    return nullptr;
  }
  const Parameter* find_parameter(const std::string& name) const {
    for (const auto& p : parameters_)
      if (p->name == name) return &p;
    return nullptr;
  }

  FlattenLayout parameter_layout() const {
    std::vector<ParamBlock> blocks;
    for (const auto& p : parameters_) blocks.push_back(p->block());
    return FlattenLayout(std::move(blocks));
  }

  // Total number of scalar user-variable entries.
  Index variable_size() const {
    Index n = 0;
    for (const auto& v : variables_) n += v->shape.size();
    return n;
  }

 private:
  void validate() {
    if (!objective_.valid()) throw Error("problem has no objective");
    if (!objective_.shape().is_scalar())
      throw ShapeError("objective must be scalar, got " + to_string(objective_.shape()));

    std::set<int> ids;
    std::set<std::string> names;
    auto declare = [&](int id, const std::string& nm) {
      if (!ids.insert(id).second) throw SymbolError("symbol '" + nm + "' declared twice");
      if (!names.insert(nm).second) throw SymbolError("duplicate name '" + nm + "'");
    };
    for (const auto& v : variables_) declare(v->id, v->name);
    for (const auto& p : parameters_) declare(p->id, p->name);

    auto check_refs = [&](const Expr& e, const std::string& where) {
      visit(e, [&](const Expr& n) {
        if (n.op() == Op::variable && !ids.count(n.variable()->id))
          throw SymbolError(where + ": undeclared variable '" + n.variable()->name + "'");
        if (n.op() == Op::parameter && !ids.count(n.parameter()->id))
          throw SymbolError(where + ": undeclared parameter '" + n.parameter()->name + "'");
      });
    };
    check_refs(objective_, "objective");
    for (std::size_t i = 0; i < constraints_.size(); ++i) {
      if (!constraints_[i].expr.valid()) throw Error("constraint " + std::to_string(i) + " has no expression");
      check_refs(constraints_[i].expr, "constraints[" + std::to_string(i) + "]");
    }

    if (sense_ == Sense::minimize && !is_convex(objective_.curvature()))
      throw DcpError("minimize objective is " + std::string(to_string(objective_.curvature())) + ", not convex");
    if (sense_ == Sense::maximize && !is_concave(objective_.curvature()))
      throw DcpError("maximize objective is " + std::string(to_string(objective_.curvature())) + ", not concave");
    for (std::size_t i = 0; i < constraints_.size(); ++i) {
      const auto& c = constraints_[i];
      const Curvature cv = c.expr.curvature();
      if (c.kind == ConstraintKind::eq_zero && !is_affine(cv))
        throw DcpError("constraints[" + std::to_string(i) + "]: equality needs an affine expression, got " +
                       std::string(to_string(cv)));
      if (c.kind == ConstraintKind::nonpos && !is_convex(cv))
        throw DcpError("constraints[" + std::to_string(i) + "]: '<= 0' needs a convex expression, got " +
                       std::string(to_string(cv)));
    }
    min_objective_ = sense_ == Sense::minimize ? objective_ : neg(objective_);
  }

  std::string name_ = "problem";
  Sense sense_ = Sense::minimize;
  Expr objective_;
  Expr min_objective_;
  std::vector<Constraint> constraints_;
  std::vector<Variable> variables_;
  std::vector<Parameter> parameters_;
};

// Structural equality of two problems (symbols matched by name).
inline bool structurally_equal(const Problem& a, const Problem& b) {
  if (a.name() != b.name() || a.sense() != b.sense()) return false;
  if (a.variables().size() != b.variables().size() || a.parameters().size() != b.parameters().size() ||
      a.constraints().size() != b.constraints().size())
    return false;
  for (std::size_t k = 0; k < a.variables().size(); ++k) {
    const auto& x = *a.variables()[k];
    const auto& y = *b.variables()[k];
    if (x.name != y.name || !(x.shape == y.shape)) return false;
  }
  for (std::size_t k = 0; k < a.parameters().size(); ++k) {
    const auto& x = *a.parameters()[k];
    const auto& y = *b.parameters()[k];
    if (x.name != y.name || !(x.shape == y.shape) || x.sign != y.sign || x.sparsity != y.sparsity) return false;
  }
  if (!structurally_equal(a.objective(), b.objective())) return false;
  for (std::size_t k = 0; k < a.constraints().size(); ++k) {
    if (a.constraints()[k].kind != b.constraints()[k].kind) return false;
    if (!structurally_equal(a.constraints()[k].expr, b.constraints()[k].expr)) return false;
  }
  return true;
}

// Numeric values for variables and parameters, keyed by symbol id, dense
// column-major.
class Assignment {
 public:
  void set(const Variable& v, std::vector<double> values) { put(v->id, v->shape, v->name, std::move(values)); }
  void set(const Parameter& p, std::vector<double> values) { put(p->id, p->shape, p->name, std::move(values)); }

  const std::vector<double>& get(int id) const {
    const auto it = values_.find(id);
    if (it == values_.end()) throw SymbolError("no value assigned for symbol id " + std::to_string(id));
    return it->second;
  }
  bool has(int id) const { return values_.count(id) > 0; }

 private:
  void put(int id, Shape shape, const std::string& name, std::vector<double> values) {
    if (values.size() != static_cast<std::size_t>(shape.size()))
      throw DimensionError("value for '" + name + "' has " + std::to_string(values.size()) + " entries, expected " +
                           std::to_string(shape.size()));
    values_[id] = std::move(values);
  }
  std::map<int, std::vector<double>> values_;
};

// Numeric evaluation of an expression, column-major result.
inline std::vector<double> evaluate(const Expr& e, const Assignment& a) {
  const Shape s = e.shape();
  auto at = [](const std::vector<double>& v, Shape sh, Index i, Index j) {
    return sh.is_scalar() ? v[0] : v[static_cast<std::size_t>(i + j * sh.rows)];
  };
  std::vector<double> out(static_cast<std::size_t>(s.size()), 0.0);
  switch (e.op()) {
    case Op::constant: return e.constant_values();
    case Op::variable: return a.get(e.variable()->id);
    case Op::parameter: return a.get(e.parameter()->id);
    case Op::add:
      for (const auto& t : e.args()) {
        const auto v = evaluate(t, a);
        for (Index j = 0; j < s.cols; ++j)
          for (Index i = 0; i < s.rows; ++i) out[static_cast<std::size_t>(i + j * s.rows)] += at(v, t.shape(), i, j);
      }
      return out;
    case Op::neg: {
      auto v = evaluate(e.args()[0], a);
      for (auto& x : v) x = -x;
      return v;
    }
    case Op::mul_elemwise: {
      const auto& l = e.args()[0];
      const auto& r = e.args()[1];
      const auto lv = evaluate(l, a);
      const auto rv = evaluate(r, a);
      for (Index j = 0; j < s.cols; ++j)
        for (Index i = 0; i < s.rows; ++i)
          out[static_cast<std::size_t>(i + j * s.rows)] = at(lv, l.shape(), i, j) * at(rv, r.shape(), i, j);
      return out;
    }
    case Op::matmul: {
      const auto& l = e.args()[0];
      const auto lv = evaluate(l, a);
      const auto rv = evaluate(e.args()[1], a);
      const Index inner = l.shape().cols;
      for (Index j = 0; j < s.cols; ++j)
        for (Index k = 0; k < inner; ++k)
          for (Index i = 0; i < s.rows; ++i)
            out[static_cast<std::size_t>(i + j * s.rows)] +=
                lv[static_cast<std::size_t>(i + k * l.shape().rows)] * rv[static_cast<std::size_t>(k + j * inner)];
      return out;
    }
    case Op::index: {
      const auto& c = e.args()[0];
      const auto v = evaluate(c, a);
      for (Index j = 0; j < s.cols; ++j)
        for (Index i = 0; i < s.rows; ++i)
          out[static_cast<std::size_t>(i + j * s.rows)] = v[static_cast<std::size_t>(
              (e.row_range().first + i) + (e.col_range().first + j) * c.shape().rows)];
      return out;
    }
    case Op::transpose: {
      const auto v = evaluate(e.args()[0], a);
      for (Index j = 0; j < s.cols; ++j)
        for (Index i = 0; i < s.rows; ++i) out[static_cast<std::size_t>(i + j * s.rows)] = v[static_cast<std::size_t>(j + i * s.cols)];
      return out;
    }
    case Op::sum: {
      double acc = 0.0;
      for (double x : evaluate(e.args()[0], a)) acc += x;
      return {acc};
    }
    case Op::hstack: {
      out.clear();
      for (const auto& t : e.args()) {
        const auto v = evaluate(t, a);
        out.insert(out.end(), v.begin(), v.end());
      }
      return out;
    }
    case Op::vstack: {
      Index row0 = 0;
      for (const auto& t : e.args()) {
        const auto v = evaluate(t, a);
        for (Index j = 0; j < s.cols; ++j)
          for (Index i = 0; i < t.shape().rows; ++i)
            out[static_cast<std::size_t>(row0 + i + j * s.rows)] = v[static_cast<std::size_t>(i + j * t.shape().rows)];
        row0 += t.shape().rows;
      }
      return out;
    }
    case Op::sum_squares: {
      double acc = 0.0;
      for (double x : evaluate(e.args()[0], a)) acc += x * x;
      return {acc};
    }
    case Op::norm1: {
      double acc = 0.0;
      for (double x : evaluate(e.args()[0], a)) acc += std::abs(x);
      return {acc};
    }
    case Op::abs: {
      auto v = evaluate(e.args()[0], a);
      for (auto& x : v) x = std::abs(x);
      return v;
    }
    case Op::pos_part: {
      auto v = evaluate(e.args()[0], a);
      for (auto& x : v) x = std::max(x, 0.0);
      return v;
    }
    case Op::neg_part: {
      auto v = evaluate(e.args()[0], a);
      for (auto& x : v) x = std::max(-x, 0.0);
      return v;
    }
  }
  return out;
}

// Largest constraint violation of a valuation: |expr| for equalities,
// max(expr, 0) for inequalities.
inline double constraint_violation(const Problem& p, const Assignment& a) {
  double worst = 0.0;
  for (const auto& c : p.constraints()) {
    for (double v : evaluate(c.expr, a)) worst = std::max(worst, c.kind == ConstraintKind::eq_zero ? std::abs(v) : v);
  }
  return worst;
}

}  // namespace paramqp
