#pragma once

// JSON problem files.
//
//   {
//     "name": "nnls",
//     "variables":  [{"name": "x", "rows": 3, "cols": 1}],
//     "parameters": [{"name": "G", "rows": 4, "cols": 3, "sign": "nonneg", "sparsity": [[0, 0], [1, 2]]}],
//     "minimize": {"op": "sum_squares", "args": [{"op": "sub", "args": [...]}]},
//     "constraints": [{"op": ">=0", "lhs": {"var": "x"}}]
//   }
//
// Leaves are {"var": name}, {"param": name} and {"const": value}; a const value
// is a number (1x1), a flat list (column vector) or a list of rows.
// {"op": "index", "args": [e], "rows": [a, b], "cols": [c, d]} selects
// inclusive zero-based ranges.

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "paramqp/dsl/problem.hpp"

namespace paramqp {

using Json = nlohmann::json;

namespace detail {

inline std::pair<std::size_t, std::size_t> line_column(std::string_view text, std::size_t byte) {
  std::size_t line = 1;
  std::size_t col = 1;
  for (std::size_t k = 0; k + 1 < byte && k < text.size(); ++k) {
    if (text[k] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

inline const Json& require(const Json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw SchemaError(where + ": missing key '" + key + "'");
  return j.at(key);
}

inline Index require_dim(const Json& j, const char* key, const std::string& where) {
  const Json& v = require(j, key, where);
  if (!v.is_number_integer() || v.get<long long>() < 1)
    throw SchemaError(where + ": '" + key + "' must be a positive integer");
  return static_cast<Index>(v.get<long long>());
}

// Nested-array value to (shape, column-major data).
inline std::pair<Shape, std::vector<double>> parse_matrix(const Json& v, const std::string& where) {
  if (v.is_number()) return {Shape{1, 1}, {v.get<double>()}};
  if (!v.is_array() || v.empty()) throw SchemaError(where + ": expected a number or non-empty array");
  if (v.front().is_number()) {
    std::vector<double> out;
    for (const auto& x : v) {
      if (!x.is_number()) throw SchemaError(where + ": mixed array");
      out.push_back(x.get<double>());
    }
    return {Shape{static_cast<Index>(out.size()), 1}, out};
  }
  const auto rows = static_cast<Index>(v.size());
  Index cols = -1;
  for (const auto& row : v) {
    if (!row.is_array() || row.empty()) throw SchemaError(where + ": expected list of rows");
    if (cols < 0) cols = static_cast<Index>(row.size());
    if (static_cast<Index>(row.size()) != cols) throw ShapeError(where + ": ragged matrix rows");
  }
  std::vector<double> out(static_cast<std::size_t>(rows * cols));
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) {
      const auto& x = v[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      if (!x.is_number()) throw SchemaError(where + ": non-numeric matrix entry");
      out[static_cast<std::size_t>(i + j * rows)] = x.get<double>();
    }
  return {Shape{rows, cols}, out};
}

inline Json matrix_to_json(Shape shape, const std::vector<double>& data) {
  if (shape.is_scalar()) return data[0];
  if (shape.cols == 1) return Json(data);
  Json rows = Json::array();
  for (Index i = 0; i < shape.rows; ++i) {
    Json row = Json::array();
    for (Index j = 0; j < shape.cols; ++j) row.push_back(data[static_cast<std::size_t>(i + j * shape.rows)]);
    rows.push_back(row);
  }
  return rows;
}

struct SymbolTable {
  std::map<std::string, Variable> vars;
  std::map<std::string, Parameter> params;
};

inline IndexRange parse_range(const Json& j, const char* key, Index extent, const std::string& where) {
  if (!j.contains(key)) return IndexRange{0, extent - 1};
  const Json& r = j.at(key);
  if (!r.is_array() || r.size() != 2 || !r[0].is_number_integer() || !r[1].is_number_integer())
    throw SchemaError(where + ": '" + key + "' must be [first, last]");
  return IndexRange{r[0].get<Index>(), r[1].get<Index>()};
}

inline Expr parse_expr(const Json& j, const SymbolTable& syms, const std::string& where) {
  if (!j.is_object()) throw SchemaError(where + ": expression must be an object");
  if (j.contains("var")) {
    const auto name = j.at("var").get<std::string>();
    const auto it = syms.vars.find(name);
    if (it == syms.vars.end()) throw SymbolError(where + ": undeclared variable '" + name + "'");
    return Expr(it->second);
  }
  if (j.contains("param")) {
    const auto name = j.at("param").get<std::string>();
    const auto it = syms.params.find(name);
    if (it == syms.params.end()) throw SymbolError(where + ": undeclared parameter '" + name + "'");
    return Expr(it->second);
  }
  if (j.contains("const")) {
    auto [shape, data] = parse_matrix(j.at("const"), where + "/const");
    return constant(shape, std::move(data));
  }
  const Json& opj = require(j, "op", where);
  if (!opj.is_string()) throw SchemaError(where + ": 'op' must be a string");
  const auto op = opj.get<std::string>();
  std::vector<Expr> args;
  if (j.contains("args")) {
    const Json& a = j.at("args");
    if (!a.is_array()) throw SchemaError(where + ": 'args' must be an array");
    for (std::size_t k = 0; k < a.size(); ++k)
      args.push_back(parse_expr(a[k], syms, where + "/args/" + std::to_string(k)));
  }
  auto arity = [&](std::size_t n) {
    if (args.size() != n)
      throw SchemaError(where + ": '" + op + "' takes " + std::to_string(n) + " argument(s), got " +
                        std::to_string(args.size()));
  };
  try {
    if (op == "add") {
      if (args.empty()) throw SchemaError(where + ": 'add' needs arguments");
      return add(args);
    }
    if (op == "sub") {
      arity(2);
      return args[0] - args[1];
    }
    if (op == "neg") {
      arity(1);
      return neg(args[0]);
    }
    if (op == "mul") {
      arity(2);
      return mul(args[0], args[1]);
    }
    if (op == "matmul") {
      arity(2);
      return matmul(args[0], args[1]);
    }
    if (op == "index") {
      arity(1);
      const Shape s = args[0].shape();
      return index(args[0], parse_range(j, "rows", s.rows, where), parse_range(j, "cols", s.cols, where));
    }
    if (op == "transpose") {
      arity(1);
      return transpose(args[0]);
    }
    if (op == "sum") {
      arity(1);
      return sum(args[0]);
    }
    if (op == "hstack") return hstack(args);
    if (op == "vstack") return vstack(args);
    if (op == "sum_squares") {
      arity(1);
      return sum_squares(args[0]);
    }
    if (op == "norm1") {
      arity(1);
      return norm1(args[0]);
    }
    if (op == "abs") {
      arity(1);
      return abs(args[0]);
    }
    if (op == "pos_part") {
      arity(1);
      return pos_part(args[0]);
    }
    if (op == "neg_part") {
      arity(1);
      return neg_part(args[0]);
    }
  } catch (const ShapeError& e) {
    throw ShapeError(where + ": " + e.what());
  }
  throw SchemaError(where + ": unknown operator '" + op + "'");
}

inline Sign parse_sign(const Json& j, const std::string& where) {
  if (!j.contains("sign")) return Sign::unknown;
  const auto s = j.at("sign").get<std::string>();
  if (s == "nonneg") return Sign::nonneg;
  if (s == "nonpos") return Sign::nonpos;
  if (s == "unknown") return Sign::unknown;
  throw SchemaError(where + ": sign must be nonneg, nonpos or unknown");
}

}  // namespace detail

inline Problem problem_from_json(const Json& doc) {
  using namespace detail;
  if (!doc.is_object()) throw SchemaError("problem file must be a JSON object");
  SymbolTable syms;
  std::vector<Variable> vars;
  std::vector<Parameter> params;
  std::map<std::string, int> names;

  auto claim = [&](const std::string& name, const std::string& where) {
    if (!names.emplace(name, 0).second) throw SymbolError(where + ": duplicate name '" + name + "'");
  };

  if (doc.contains("variables")) {
    const Json& vs = doc.at("variables");
    if (!vs.is_array()) throw SchemaError("'variables' must be an array");
    for (std::size_t k = 0; k < vs.size(); ++k) {
      const std::string where = "variables/" + std::to_string(k);
      const auto name = require(vs[k], "name", where).get<std::string>();
      claim(name, where);
      auto v = make_variable(name, Shape{require_dim(vs[k], "rows", where), require_dim(vs[k], "cols", where)});
      syms.vars.emplace(name, v);
      vars.push_back(v);
    }
  }
  if (doc.contains("parameters")) {
    const Json& ps = doc.at("parameters");
    if (!ps.is_array()) throw SchemaError("'parameters' must be an array");
    for (std::size_t k = 0; k < ps.size(); ++k) {
      const std::string where = "parameters/" + std::to_string(k);
      const Json& pj = ps[k];
      const auto name = require(pj, "name", where).get<std::string>();
      claim(name, where);
      const Shape shape{require_dim(pj, "rows", where), require_dim(pj, "cols", where)};
      std::optional<std::vector<Position>> sparsity;
      if (pj.contains("sparsity")) {
        sparsity.emplace();
        for (const auto& rc : pj.at("sparsity")) {
          if (!rc.is_array() || rc.size() != 2) throw SchemaError(where + ": sparsity entries must be [row, col]");
          sparsity->push_back(Position{rc[0].get<Index>(), rc[1].get<Index>()});
        }
      }
      auto p = make_parameter(name, shape, parse_sign(pj, where), std::move(sparsity));
      syms.params.emplace(name, p);
      params.push_back(p);
    }
  }

  const bool has_min = doc.contains("minimize");
  const bool has_max = doc.contains("maximize");
  if (has_min == has_max) throw SchemaError("exactly one of 'minimize' or 'maximize' is required");
  const Sense sense = has_min ? Sense::minimize : Sense::maximize;
  Expr objective = parse_expr(doc.at(has_min ? "minimize" : "maximize"), syms, has_min ? "minimize" : "maximize");

  std::vector<Constraint> constraints;
  if (doc.contains("constraints")) {
    const Json& cs = doc.at("constraints");
    if (!cs.is_array()) throw SchemaError("'constraints' must be an array");
    for (std::size_t k = 0; k < cs.size(); ++k) {
      const std::string where = "constraints/" + std::to_string(k);
      const auto op = require(cs[k], "op", where).get<std::string>();
      Expr lhs = parse_expr(require(cs[k], "lhs", where), syms, where + "/lhs");
      if (op == "<=0") {
        constraints.push_back({ConstraintKind::nonpos, lhs});
      } else if (op == "==0") {
        constraints.push_back({ConstraintKind::eq_zero, lhs});
      } else if (op == ">=0") {
        constraints.push_back({ConstraintKind::nonpos, neg(lhs)});
      } else {
        throw SchemaError(where + ": constraint op must be '<=0', '==0' or '>=0'");
      }
    }
  }
  const std::string name = doc.contains("name") ? doc.at("name").get<std::string>() : "problem";
  return Problem(sense, std::move(objective), std::move(constraints), std::move(vars), std::move(params), name);
}

inline Problem parse_problem(std::string_view text) {
  Json doc;
  try {
    doc = Json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    const auto [line, col] = detail::line_column(text, e.byte);
    throw ParseError(std::string("syntax error: ") + e.what(), line, col);
  }
  try {
    return problem_from_json(doc);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("schema error: ") + e.what());
  }
}

inline Json expr_to_json(const Expr& e) {
  switch (e.op()) {
    case Op::constant: return Json{{"const", detail::matrix_to_json(e.shape(), e.constant_values())}};
    case Op::variable: return Json{{"var", e.variable()->name}};
    case Op::parameter: return Json{{"param", e.parameter()->name}};
    default: break;
  }
  Json j{{"op", std::string(op_name(e.op()))}};
  Json args = Json::array();
  for (const auto& a : e.args()) args.push_back(expr_to_json(a));
  j["args"] = args;
  if (e.op() == Op::index) {
    j["rows"] = {e.row_range().first, e.row_range().last};
    j["cols"] = {e.col_range().first, e.col_range().last};
  }
  return j;
}

inline Json problem_to_json(const Problem& p) {
  Json doc;
  doc["name"] = p.name();
  doc["variables"] = Json::array();
  for (const auto& v : p.variables())
    doc["variables"].push_back({{"name", v->name}, {"rows", v->shape.rows}, {"cols", v->shape.cols}});
  doc["parameters"] = Json::array();
  for (const auto& prm : p.parameters()) {
    Json pj{{"name", prm->name}, {"rows", prm->shape.rows}, {"cols", prm->shape.cols}};
    if (prm->sign != Sign::unknown) pj["sign"] = std::string(to_string(prm->sign));
    if (prm->sparsity) {
      pj["sparsity"] = Json::array();
      for (const auto& pos : *prm->sparsity) pj["sparsity"].push_back({pos.row, pos.col});
    }
    doc["parameters"].push_back(pj);
  }
  doc[p.sense() == Sense::minimize ? "minimize" : "maximize"] = expr_to_json(p.objective());
  doc["constraints"] = Json::array();
  for (const auto& c : p.constraints()) {
    if (c.kind == ConstraintKind::eq_zero) {
      doc["constraints"].push_back({{"op", "==0"}, {"lhs", expr_to_json(c.expr)}});
    } else if (c.expr.op() == Op::neg) {
      doc["constraints"].push_back({{"op", ">=0"}, {"lhs", expr_to_json(c.expr.args()[0])}});
    } else {
      doc["constraints"].push_back({{"op", "<=0"}, {"lhs", expr_to_json(c.expr)}});
    }
  }
  return doc;
}

inline std::string print_problem(const Problem& p, int indent = 2) { return problem_to_json(p).dump(indent); }

// Parameter-values file: {"G": [[...], ...], "h": [...]} using the same
// nested-array convention as constants. Returns dense column-major values
// for every parameter named in the file.
inline std::map<std::string, std::vector<double>> parse_parameter_values(const Problem& p, std::string_view text) {
  Json doc;
  try {
    doc = Json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    const auto [line, col] = detail::line_column(text, e.byte);
    throw ParseError(std::string("syntax error: ") + e.what(), line, col);
  }
  if (!doc.is_object()) throw SchemaError("parameter file must be a JSON object");
  std::map<std::string, std::vector<double>> out;
  for (const auto& [name, value] : doc.items()) {
    const Parameter* prm = p.find_parameter(name);
    if (!prm) throw SymbolError("parameter file: undeclared parameter '" + name + "'");
    auto [shape, data] = detail::parse_matrix(value, name);
    const Shape want = (*prm)->shape;
    // A flat list fills a 1 x n row parameter as well.
    if (!(shape == want) && !(shape.cols == 1 && want.rows == 1 && shape.rows == want.cols))
      throw ShapeError("parameter file: '" + name + "' has shape " + to_string(shape) + ", expected " +
                       to_string(want));
    out.emplace(name, std::move(data));
  }
  return out;
}

}  // namespace paramqp
