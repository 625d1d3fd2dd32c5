#pragma once

#include <algorithm>
#include <set>
#include <span>
#include <vector>

#include "paramqp/canon/types.hpp"
#include "paramqp/dsl/problem.hpp"

namespace paramqp {

// theta_tilde = C [theta; 1]: one full mat-vec including the constant column.
inline DenseVec eval_params(const AffineMap& map, std::span<const double> theta) {
  if (theta.size() != static_cast<std::size_t>(map.theta_size()))
    throw DimensionError("eval_params: theta has length " + std::to_string(theta.size()) + ", expected " +
                         std::to_string(map.theta_size()));
  DenseVec extended(theta.begin(), theta.end());
  extended.push_back(1.0);
  return spmv(map.C, extended);
}

// Recomputes the theta_tilde rows that depend on any parameter in `changed`
// (constant column plus every contribution to those rows) and leaves all other
// rows untouched. Returns the segments whose values were recomputed.
//
// Each row is accumulated in ascending column order, the same order spmv uses,
// so a recomputed row is bit-identical to the full evaluation.
inline std::vector<Segment> partial_update(const AffineMap& map, const DependencyTable& deps, const CanonQP& qp,
                                           std::span<const double> theta, std::span<const int> changed,
                                           std::span<double> theta_tilde) {
  if (theta.size() != static_cast<std::size_t>(map.theta_size()))
    throw DimensionError("partial_update: theta length mismatch");
  if (theta_tilde.size() != static_cast<std::size_t>(map.C.nrows))
    throw DimensionError("partial_update: theta_tilde length mismatch");

  std::vector<Index> rows;
  std::array<bool, 5> touched{};
  for (const int id : changed) {
    const auto& dep = deps.of(id);
    rows.insert(rows.end(), dep.rows.begin(), dep.rows.end());
    for (const auto s : dep.segments) touched[static_cast<std::size_t>(s)] = true;
  }
  std::sort(rows.begin(), rows.end());
  rows.erase(std::unique(rows.begin(), rows.end()), rows.end());

  const Index d = map.theta_size();
  const auto& Ct = map.C_rows;
  for (const Index r : rows) {
    double acc = 0.0;
    for (Index k = Ct.col_ptr[r]; k < Ct.col_ptr[r + 1]; ++k) {
      const Index col = Ct.row_idx[k];
      acc += Ct.values[k] * (col == d ? 1.0 : theta[col]);
    }
    theta_tilde[r] = acc;
  }
  (void)qp;
  std::vector<Segment> out;
  for (const auto s : kAllSegments)
    if (touched[static_cast<std::size_t>(s)]) out.push_back(s);
  return out;
}

// x = R [x_tilde; 1]; a selector R reduces to index gathers.
inline DenseVec retrieve(const RetrievalMap& map, std::span<const double> x_tilde) {
  if (x_tilde.size() + 1 != static_cast<std::size_t>(map.R.ncols))
    throw DimensionError("retrieve: x_tilde has length " + std::to_string(x_tilde.size()) + ", expected " +
                         std::to_string(map.R.ncols - 1));
  if (map.selector) {
    DenseVec out(map.source.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x_tilde[map.source[i]];
    return out;
  }
  DenseVec extended(x_tilde.begin(), x_tilde.end());
  extended.push_back(1.0);
  return spmv(map.R, extended);
}

// Flat theta from dense per-parameter values, in layout order.
inline DenseVec flatten_parameters(const Problem& p, const Assignment& values) {
  const FlattenLayout layout = p.parameter_layout();
  DenseVec theta(static_cast<std::size_t>(layout.size()), 0.0);
  for (const auto& prm : p.parameters()) layout.scatter(prm->id, values.get(prm->id), theta);
  return theta;
}

// Assignment holding both parameter values (from theta) and user-variable
// values (from a retrieved x), for evaluating the user problem.
inline Assignment make_assignment(const Problem& p, std::span<const double> theta, std::span<const double> x_user) {
  Assignment a;
  const FlattenLayout layout = p.parameter_layout();
  for (const auto& prm : p.parameters()) a.set(prm, layout.gather(prm->id, theta));
  Index off = 0;
  for (const auto& v : p.variables()) {
    const Index n = v->shape.size();
    if (!x_user.empty()) a.set(v, std::vector<double>(x_user.begin() + off, x_user.begin() + off + n));
    off += n;
  }
  return a;
}

// User objective value (in the problem's own sense).
inline double user_objective(const Problem& p, std::span<const double> theta, std::span<const double> x_user) {
  return evaluate(p.objective(), make_assignment(p, theta, x_user))[0];
}

}  // namespace paramqp
