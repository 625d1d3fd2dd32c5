#pragma once

// Reference solves for generated bundles, recorded with the in-process
// pipeline so the compiled solver can be replayed against them.

#include <vector>

#include "paramqp/codegen/generate.hpp"
#include "paramqp/pipeline.hpp"

namespace paramqp::codegen {

// Replays a sequence of flat parameter vectors. The first step pushes every
// parameter; later steps push only the parameters whose values changed.
inline std::vector<FixtureCase> record_fixtures(const Problem& problem, const std::vector<DenseVec>& thetas,
                                                const Settings& settings) {
  ParametricSolver ps(problem, settings);
  const auto& layout = ps.canonical().cmap.layout;
  std::vector<FixtureCase> out;
  const DenseVec* prev = nullptr;
  for (const auto& theta : thetas) {
    FixtureCase fc;
    for (const auto& p : problem.parameters()) {
      const Index off = layout.offset(p->id);
      const Index len = layout.length(p->id);
      bool changed = prev == nullptr;
      for (Index k = 0; k < len && !changed; ++k) changed = theta[off + k] != (*prev)[off + k];
      if (!changed) continue;
      DenseVec dense = layout.gather(p->id, theta);
      ps.set(p, dense);
      fc.updates.emplace_back(p->id, std::move(dense));
    }
    const Solution s = ps.solve();
    fc.theta = ps.theta();
    fc.theta_tilde = ps.theta_tilde();
    fc.x_tilde = s.x_tilde;
    fc.x = ps.x();
    fc.status = static_cast<int>(s.status);
    out.push_back(std::move(fc));
    prev = &theta;
  }
  return out;
}

}  // namespace paramqp::codegen
