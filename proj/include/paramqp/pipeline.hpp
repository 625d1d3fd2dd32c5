#pragma once

// Canonicalize once, then solve many instances of a problem family. Parameter
// changes go through partial_update and only the solver update calls matching
// the touched canonical segments are issued.

#include <chrono>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "paramqp/canon/canonicalize.hpp"
#include "paramqp/canon/maps.hpp"
#include "paramqp/solver/admm.hpp"

namespace paramqp {

class ParametricSolver {
 public:
  explicit ParametricSolver(Problem problem, Settings settings = {})
      : problem_(std::move(problem)), canon_(canonicalize(problem_)), settings_(settings) {
    theta_.assign(static_cast<std::size_t>(canon_.cmap.theta_size()), 0.0);
  }

  const Problem& problem() const noexcept { return problem_; }
  const Canonicalization& canonical() const noexcept { return canon_; }
  const DenseVec& theta() const noexcept { return theta_; }
  const DenseVec& theta_tilde() const noexcept { return theta_tilde_; }
  bool has_workspace() const noexcept { return ws_.has_value(); }
  const SolverWorkspace& workspace() const { return ws_.value(); }
  int factorizations() const noexcept { return ws_ ? ws_->factorizations() : 0; }
  // Segments recomputed by the most recent solve (all five on the first solve).
  const std::vector<Segment>& last_touched() const noexcept { return last_touched_; }
  bool last_refactorized() const noexcept { return last_refactorized_; }

  void set(const Parameter& p, std::span<const double> dense_col_major) {
    canon_.cmap.layout.scatter(p->id, dense_col_major, theta_);
    dirty_.insert(p->id);
  }

  void set(const std::string& name, std::span<const double> dense_col_major) {
    const Parameter* p = problem_.find_parameter(name);
    if (!p) throw SymbolError("unknown parameter '" + name + "'");
    set(*p, dense_col_major);
  }

  // Flat theta in layout order; marks every parameter dirty.
  void set_theta(std::span<const double> theta) {
    if (theta.size() != theta_.size()) throw DimensionError("set_theta: length mismatch");
    theta_.assign(theta.begin(), theta.end());
    for (const auto& p : problem_.parameters()) dirty_.insert(p->id);
  }

  Solution solve(int iteration_cap = 0) {
    last_refactorized_ = false;
    if (!ws_) {
      theta_tilde_ = eval_params(canon_.cmap, theta_);
      ws_.emplace(canon_.qp.unpack(theta_tilde_), settings_);
      last_touched_.assign(kAllSegments.begin(), kAllSegments.end());
      last_refactorized_ = true;
    } else {
      const std::vector<int> changed(dirty_.begin(), dirty_.end());
      last_touched_ = partial_update(canon_.cmap, canon_.deps, canon_.qp, theta_, changed, theta_tilde_);
      apply_segments(last_touched_);
    }
    dirty_.clear();
    Solution s = ws_->solve(iteration_cap);
    x_user_ = retrieve(canon_.rmap, s.x_tilde);
    return s;
  }

  // Retrieved user variables, concatenated in declaration order.
  const DenseVec& x() const noexcept { return x_user_; }

  DenseVec value(const Variable& v) const {
    for (const auto& b : canon_.rmap.blocks)
      if (b.name == v->name)
        return DenseVec(x_user_.begin() + b.offset, x_user_.begin() + b.offset + b.shape.size());
    throw SymbolError("unknown variable '" + v->name + "'");
  }

  // User-problem objective and constraint violation at the last solution.
  double user_objective() const { return paramqp::user_objective(problem_, theta_, x_user_); }
  double user_violation() const { return constraint_violation(problem_, make_assignment(problem_, theta_, x_user_)); }

 private:
  std::span<const double> segment_view(Segment s) const {
    const auto r = canon_.qp.segment(s);
    return std::span<const double>(theta_tilde_).subspan(static_cast<std::size_t>(r.offset),
                                                          static_cast<std::size_t>(r.length));
  }

  void apply_segments(const std::vector<Segment>& touched) {
    bool P = false, q = false, l = false, u = false, A = false;
    for (const auto s : touched) {
      P |= s == Segment::P;
      q |= s == Segment::q;
      l |= s == Segment::l;
      u |= s == Segment::u;
      A |= s == Segment::A;
    }
    using Opt = std::optional<std::span<const double>>;
    if (q || l || u)
      ws_->update_vectors(q ? Opt(segment_view(Segment::q)) : std::nullopt,
                          l ? Opt(segment_view(Segment::l)) : std::nullopt,
                          u ? Opt(segment_view(Segment::u)) : std::nullopt);
    if (P || A) {
      ws_->update_matrix_values(P ? Opt(segment_view(Segment::P)) : std::nullopt,
                                A ? Opt(segment_view(Segment::A)) : std::nullopt);
      last_refactorized_ = true;
    }
  }

  Problem problem_;
  Canonicalization canon_;
  Settings settings_;
  DenseVec theta_;
  DenseVec theta_tilde_;
  std::set<int> dirty_;
  std::optional<SolverWorkspace> ws_;
  std::vector<Segment> last_touched_;
  bool last_refactorized_ = false;
  DenseVec x_user_;
};

// The uncached path: canonicalize, evaluate C, set up and solve from scratch.
inline Solution solve_from_scratch(const Problem& problem, std::span<const double> theta, const Settings& settings,
                                   DenseVec* x_user = nullptr) {
  const auto c = canonicalize(problem);
  const auto tt = eval_params(c.cmap, theta);
  SolverWorkspace ws(c.qp.unpack(tt), settings);
  Solution s = ws.solve();
  if (x_user) *x_user = retrieve(c.rmap, s.x_tilde);
  return s;
}

}  // namespace paramqp
