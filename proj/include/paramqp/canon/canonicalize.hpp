#pragma once

// Reduction of a DPP-compliant problem to
//
//   minimize 1/2 x'Px + q'x   subject to   l <= Ax <= u
//
// together with the affine maps theta -> theta_tilde (C) and x_tilde -> x (R).
// Canonical variables are the user variables (declaration order, column-major)
// followed by auxiliary variables in the order the reductions create them.
// Rows appear in reduction order: objective reductions first, then each
// constraint in turn.

#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "paramqp/canon/affine.hpp"
#include "paramqp/canon/types.hpp"
#include "paramqp/dsl/dpp.hpp"
#include "paramqp/dsl/problem.hpp"

namespace paramqp {

namespace canon {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class Mode {
  exact,    // result equals the expression
  convex,   // result is an upper bound that can be made tight
  concave,  // result is a lower bound that can be made tight
};

inline Mode flip(Mode m) {
  if (m == Mode::convex) return Mode::concave;
  if (m == Mode::concave) return Mode::convex;
  return m;
}

class Builder {
 public:
  explicit Builder(const Problem& p) : problem_(p), layout_(p.parameter_layout()) {
    for (const auto& v : p.variables()) {
      var_offset_[v->id] = n_vars_;
      n_vars_ += v->shape.size();
    }
    n_user_ = n_vars_;
  }

  Canonicalization run() {
    collect_objective(problem_.minimize_objective(), ThetaAffine(1.0));
    for (std::size_t i = 0; i < problem_.constraints().size(); ++i) {
      const auto& c = problem_.constraints()[i];
      try {
        add_constraint(c);
      } catch (const UnsupportedError& e) {
        throw UnsupportedError("constraints[" + std::to_string(i) + "]: " + e.what());
      }
    }
    return assemble();
  }

 private:
  struct Row {
    std::vector<std::pair<Index, ThetaAffine>> coefs;
    ThetaAffine lower;
    ThetaAffine upper;
  };

  Index new_vars(Index count) {
    const Index first = n_vars_;
    n_vars_ += count;
    return first;
  }

  // lin(entry) in [lo, hi] where entry's offset is moved to the bounds.
  void push_row(const AffineEntry& e, bool has_lower, bool has_upper) {
    Row r;
    r.coefs = e.coefs;
    const ThetaAffine bound = -e.offset;
    r.lower = has_lower ? bound : ThetaAffine(-kInf);
    r.upper = has_upper ? bound : ThetaAffine(kInf);
    rows_.push_back(std::move(r));
  }

  AffineExpr variable_block(Index first, Shape shape) const {
    AffineExpr out(shape);
    for (Index k = 0; k < shape.size(); ++k)
      out.entries[static_cast<std::size_t>(k)].coefs.emplace_back(first + k, ThetaAffine(1.0));
    return out;
  }

  AffineExpr leaf(const Expr& e) const {
    const Shape s = e.shape();
    AffineExpr out(s);
    switch (e.op()) {
      case Op::constant:
        for (Index k = 0; k < s.size(); ++k)
          out.entries[static_cast<std::size_t>(k)].offset = ThetaAffine(e.constant_values()[static_cast<std::size_t>(k)]);
        return out;
      case Op::variable: return variable_block(var_offset_.at(e.variable()->id), s);
      case Op::parameter: {
        const int id = e.parameter()->id;
        for (Index j = 0; j < s.cols; ++j)
          for (Index i = 0; i < s.rows; ++i)
            if (const auto k = layout_.index(id, i, j)) out.at(i, j).offset = ThetaAffine::param(*k);
        return out;
      }
      default: break;
    }
    throw Error("leaf(): not a leaf node");
  }

  // Epigraph t >= |a| for every entry; returns t.
  AffineExpr abs_epigraph(const AffineExpr& a) {
    const Index t0 = new_vars(a.shape.size());
    const AffineExpr t = variable_block(t0, a.shape);
    for (std::size_t k = 0; k < a.entries.size(); ++k) push_row(t.entries[k] + (-a.entries[k]), true, false);
    for (std::size_t k = 0; k < a.entries.size(); ++k) push_row(t.entries[k] + a.entries[k], true, false);
    return t;
  }

  // t >= b and t >= 0 for every entry; returns t.
  AffineExpr hinge_epigraph(const AffineExpr& b) {
    const Index t0 = new_vars(b.shape.size());
    const AffineExpr t = variable_block(t0, b.shape);
    for (std::size_t k = 0; k < b.entries.size(); ++k) push_row(t.entries[k] + (-b.entries[k]), true, false);
    for (std::size_t k = 0; k < b.entries.size(); ++k) push_row(t.entries[k], true, false);
    return t;
  }

  Mode atom_argument_mode(Op op, const Expr& arg) const {
    if (is_affine(arg.curvature())) return Mode::exact;
    switch (op) {
      case Op::pos_part: return Mode::convex;
      case Op::neg_part: return Mode::concave;
      default: return is_nonneg(arg.sign()) ? Mode::convex : Mode::concave;
    }
  }

  AffineExpr linearize(const Expr& e, Mode mode) {
    switch (e.op()) {
      case Op::constant:
      case Op::variable:
      case Op::parameter: return leaf(e);
      case Op::add: {
        AffineExpr acc = linearize(e.args()[0], mode);
        for (std::size_t k = 1; k < e.args().size(); ++k) acc = add(acc, linearize(e.args()[k], mode), e.shape());
        return acc;
      }
      case Op::neg: return negate(linearize(e.args()[0], flip(mode)));
      case Op::mul_elemwise:
      case Op::matmul: {
        const Expr& a = e.args()[0];
        const Expr& b = e.args()[1];
        const bool left_const = !a.has_vars();
        const Expr& k = left_const ? a : b;
        const Expr& x = left_const ? b : a;
        if (k.has_vars()) throw UnsupportedError("product of variable-dependent expressions: " + describe(e));
        Mode xmode = Mode::exact;
        if (!is_affine(x.curvature())) {
          if (is_nonneg(k.sign())) {
            xmode = mode;
          } else if (is_nonpos(k.sign())) {
            xmode = flip(mode);
          } else {
            throw DcpError("product with a constant of unknown sign: " + describe(e));
          }
        }
        const AffineExpr kk = linearize(k, Mode::exact);
        const AffineExpr xx = linearize(x, xmode);
        if (e.op() == Op::mul_elemwise) return mul_elemwise(kk, xx, e.shape());
        return left_const ? matmul(kk, xx) : matmul(xx, kk);
      }
      case Op::index: return slice(linearize(e.args()[0], mode), e.row_range(), e.col_range());
      case Op::transpose: return transpose(linearize(e.args()[0], mode));
      case Op::sum: return sum_all(linearize(e.args()[0], mode));
      case Op::hstack:
      case Op::vstack: {
        std::vector<AffineExpr> parts;
        for (const auto& a : e.args()) parts.push_back(linearize(a, mode));
        return e.op() == Op::hstack ? hstack(parts, e.shape()) : vstack(parts, e.shape());
      }
      case Op::sum_squares:
      case Op::norm1:
      case Op::abs:
      case Op::pos_part:
      case Op::neg_part: break;
    }

    const Expr& arg = e.args()[0];
    if (!arg.has_vars() && !arg.has_params()) {
      // Atom over plain numbers.
      const auto v = evaluate(e, Assignment{});
      AffineExpr out(e.shape());
      for (std::size_t k = 0; k < v.size(); ++k) out.entries[k].offset = ThetaAffine(v[k]);
      return out;
    }
    if (e.op() == Op::sum_squares)
      throw UnsupportedError("sum_squares is only supported as an additive objective term: " + describe(e));
    if (mode != Mode::convex)
      throw DppError("convex atom used where an exact or lower bound is required: " + describe(e));

    const AffineExpr a = linearize(arg, atom_argument_mode(e.op(), arg));
    switch (e.op()) {
      case Op::abs: return abs_epigraph(a);
      case Op::norm1: return sum_all(abs_epigraph(a));
      case Op::pos_part: return hinge_epigraph(a);
      case Op::neg_part: return hinge_epigraph(negate(a));
      default: break;
    }
    throw Error("linearize(): unreachable");
  }

  void add_quadratic(Index var, const ThetaAffine& coef) {
    auto& slot = quad_[{var, var}];
    slot = slot + coef;
  }

  void add_linear(const AffineEntry& lin, const ThetaAffine& coeff) {
    for (const auto& [v, c] : lin.coefs) {
      auto& slot = q_[v];
      slot = slot + coeff * c;
    }
  }

  // Objective as a weighted sum of quadratic atoms and linearizable terms.
  void collect_objective(const Expr& e, const ThetaAffine& coeff) {
    switch (e.op()) {
      case Op::add:
        for (const auto& a : e.args()) collect_objective(a, coeff);
        return;
      case Op::neg: collect_objective(e.args()[0], -coeff); return;
      case Op::mul_elemwise: {
        const Expr& a = e.args()[0];
        const Expr& b = e.args()[1];
        const Expr* k = nullptr;
        const Expr* x = nullptr;
        if (a.shape().is_scalar() && b.shape().is_scalar()) {
          if (!a.has_vars()) {
            k = &a;
            x = &b;
          } else if (!b.has_vars()) {
            k = &b;
            x = &a;
          }
        }
        if (k && x->has_vars() && !is_affine(x->curvature())) {
          const AffineExpr kk = linearize(*k, Mode::exact);
          collect_objective(*x, coeff * kk.entries[0].offset);
          return;
        }
        break;
      }
      case Op::sum_squares: {
        const Expr& arg = e.args()[0];
        if (!is_affine(arg.curvature()))
          throw UnsupportedError("sum_squares argument must be affine: " + describe(e));
        const AffineExpr a = linearize(arg, Mode::exact);
        const Index y0 = new_vars(arg.shape().size());
        // y = a, contributing coeff * ||y||^2 = 1/2 y' (2 coeff I) y.
        for (std::size_t k = 0; k < a.entries.size(); ++k) {
          AffineEntry row = a.entries[k];
          AffineEntry y;
          y.coefs.emplace_back(y0 + static_cast<Index>(k), ThetaAffine(-1.0));
          push_row(row + y, true, true);
          add_quadratic(y0 + static_cast<Index>(k), scaled(coeff, 2.0));
        }
        return;
      }
      default: break;
    }
    const AffineExpr lin = linearize(e, Mode::convex);
    add_linear(lin.entries[0], coeff);
  }

  void add_constraint(const Constraint& c) {
    if (c.kind == ConstraintKind::eq_zero) {
      for (const auto& e : linearize(c.expr, Mode::exact).entries) push_row(e, true, true);
      return;
    }
    // -f <= 0 is written as f >= 0 so rows keep the orientation of f.
    if (c.expr.op() == Op::neg) {
      for (const auto& e : linearize(c.expr.args()[0], Mode::concave).entries) push_row(e, true, false);
      return;
    }
    for (const auto& e : linearize(c.expr, Mode::convex).entries) push_row(e, false, true);
  }

  Canonicalization assemble() {
    Canonicalization out;
    auto& qp = out.qp;
    qp.n_tilde = n_vars_;
    qp.m_tilde = static_cast<Index>(rows_.size());

    // P: structurally nonzero upper-triangular entries in CSC order.
    std::vector<std::pair<std::pair<Index, Index>, const ThetaAffine*>> p_entries;
    for (const auto& [ij, val] : quad_)
      if (!val.is_zero()) p_entries.push_back({{ij.second, ij.first}, &val});  // (col, row) for CSC order
    std::sort(p_entries.begin(), p_entries.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<Triplet> p_trip;
    for (const auto& [cr, v] : p_entries) p_trip.push_back({cr.second, cr.first, 0.0});
    qp.P_pattern = build_csc(p_trip, n_vars_, n_vars_);

    std::vector<std::pair<std::pair<Index, Index>, const ThetaAffine*>> a_entries;
    for (std::size_t r = 0; r < rows_.size(); ++r)
      for (const auto& [v, c] : rows_[r].coefs)
        if (!c.is_zero()) a_entries.push_back({{v, static_cast<Index>(r)}, &c});
    std::sort(a_entries.begin(), a_entries.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<Triplet> a_trip;
    for (const auto& [cr, v] : a_entries) a_trip.push_back({cr.second, cr.first, 0.0});
    qp.A_pattern = build_csc(a_trip, qp.m_tilde, n_vars_);

    const Index nP = qp.P_pattern.nnz();
    const Index nA = qp.A_pattern.nnz();
    Index off = 0;
    auto place = [&](Segment s, Index len) {
      qp.segments[static_cast<std::size_t>(s)] = SegmentRange{off, len};
      off += len;
    };
    place(Segment::P, nP);
    place(Segment::q, n_vars_);
    place(Segment::l, qp.m_tilde);
    place(Segment::u, qp.m_tilde);
    place(Segment::A, nA);

    // Rows of C, in theta_tilde order.
    const ThetaAffine zero;
    std::vector<const ThetaAffine*> rows(static_cast<std::size_t>(off), &zero);
    for (Index k = 0; k < nP; ++k) rows[static_cast<std::size_t>(k)] = p_entries[static_cast<std::size_t>(k)].second;
    for (const auto& [v, val] : q_) rows[static_cast<std::size_t>(qp.segment(Segment::q).offset + v)] = &val;
    for (Index r = 0; r < qp.m_tilde; ++r) {
      rows[static_cast<std::size_t>(qp.segment(Segment::l).offset + r)] = &rows_[static_cast<std::size_t>(r)].lower;
      rows[static_cast<std::size_t>(qp.segment(Segment::u).offset + r)] = &rows_[static_cast<std::size_t>(r)].upper;
    }
    for (Index k = 0; k < nA; ++k)
      rows[static_cast<std::size_t>(qp.segment(Segment::A).offset + k)] = a_entries[static_cast<std::size_t>(k)].second;

    const Index d = layout_.size();
    std::vector<Triplet> c_trip;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (const auto& [k, coef] : rows[r]->terms)
        if (coef != 0.0) c_trip.push_back({static_cast<Index>(r), k, coef});
      if (rows[r]->constant != 0.0) c_trip.push_back({static_cast<Index>(r), d, rows[r]->constant});
    }
    out.cmap.C = build_csc(c_trip, off, d + 1);
    out.cmap.C_rows = transpose(out.cmap.C);
    out.cmap.layout = layout_;

    // Retrieval: user variables are the leading canonical variables.
    auto& rm = out.rmap;
    std::vector<Triplet> r_trip;
    for (Index i = 0; i < n_user_; ++i) {
      r_trip.push_back({i, i, 1.0});
      rm.source.push_back(i);
    }
    rm.R = build_csc(r_trip, n_user_, n_vars_ + 1);
    rm.selector = true;
    for (const auto& v : problem_.variables()) rm.blocks.push_back({v->name, v->shape, var_offset_.at(v->id)});

    // Dependencies.
    auto& deps = out.deps;
    deps.column_owner.assign(static_cast<std::size_t>(d), -1);
    for (const auto& p : problem_.parameters()) {
      ParamDependency pd;
      pd.param_id = p->id;
      pd.name = p->name;
      const Index first = layout_.offset(p->id);
      const Index len = layout_.length(p->id);
      std::set<Index> touched;
      for (Index col = first; col < first + len; ++col) {
        deps.column_owner[static_cast<std::size_t>(col)] = p->id;
        for (Index k = out.cmap.C.col_ptr[col]; k < out.cmap.C.col_ptr[col + 1]; ++k)
          touched.insert(out.cmap.C.row_idx[k]);
      }
      pd.rows.assign(touched.begin(), touched.end());
      for (const Index r : pd.rows) pd.rows_by_segment[static_cast<std::size_t>(qp.segment_of(r))].push_back(r);
      for (const auto s : kAllSegments)
        if (!pd.rows_by_segment[static_cast<std::size_t>(s)].empty()) pd.segments.push_back(s);
      deps.params.push_back(std::move(pd));
    }
    return out;
  }

  const Problem& problem_;
  FlattenLayout layout_;
  std::unordered_map<int, Index> var_offset_;
  Index n_vars_ = 0;
  Index n_user_ = 0;
  std::vector<Row> rows_;
  std::map<std::pair<Index, Index>, ThetaAffine> quad_;
  std::map<Index, ThetaAffine> q_;
};

}  // namespace canon

// Reduces `p` to standard QP form. Throws DppError for non-DPP problems and
// UnsupportedError for objectives the QP reductions cannot express.
inline Canonicalization canonicalize(const Problem& p) {
  const DppReport report = check_dpp(p);
  if (!report.compliant) {
    std::string msg = "problem is not DPP-compliant:";
    for (const auto& v : report.violations) msg += "\n  " + v.path + ": " + v.reason;
    throw DppError(msg);
  }
  return canon::Builder(p).run();
}

}  // namespace paramqp
