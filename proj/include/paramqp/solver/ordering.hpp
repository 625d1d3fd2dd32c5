#pragma once

// Minimum-degree fill-reducing ordering on an explicit elimination graph.
// Adequate for KKT systems of a few thousand rows; ties broken by node index
// so the ordering is deterministic.

#include <algorithm>
#include <functional>
#include <queue>
#include <utility>
#include <vector>

#include "paramqp/sparse/csc.hpp"

namespace paramqp::solver {

// perm[k] = original index of the k-th pivot. `upper` is the upper triangle of
// a symmetric matrix; only its pattern is read.
inline std::vector<Index> minimum_degree_order(const CscMatrix& upper) {
  const Index n = upper.ncols;
  std::vector<std::vector<Index>> adj(static_cast<std::size_t>(n));
  for (Index j = 0; j < n; ++j)
    for (Index k = upper.col_ptr[j]; k < upper.col_ptr[j + 1]; ++k) {
      const Index i = upper.row_idx[k];
      if (i == j) continue;
      adj[i].push_back(j);
      adj[j].push_back(i);
    }
  for (auto& a : adj) {
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
  }

  using Entry = std::pair<std::size_t, Index>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
  for (Index v = 0; v < n; ++v) heap.push({adj[v].size(), v});

  std::vector<char> done(static_cast<std::size_t>(n), 0);
  std::vector<Index> perm;
  perm.reserve(static_cast<std::size_t>(n));
  std::vector<Index> merged;
  while (!heap.empty()) {
    const auto [deg, p] = heap.top();
    heap.pop();
    if (done[p] || deg != adj[p].size()) continue;
    done[p] = 1;
    perm.push_back(p);
    const std::vector<Index> clique = std::move(adj[p]);
    adj[p].clear();
    for (const Index u : clique) {
      merged.clear();
      std::set_union(adj[u].begin(), adj[u].end(), clique.begin(), clique.end(), std::back_inserter(merged));
      merged.erase(std::remove_if(merged.begin(), merged.end(), [&](Index w) { return w == u || w == p; }),
                   merged.end());
      adj[u].swap(merged);
      heap.push({adj[u].size(), u});
    }
  }
  return perm;
}

inline std::vector<Index> inverse_permutation(const std::vector<Index>& perm) {
  std::vector<Index> inv(perm.size());
  for (std::size_t k = 0; k < perm.size(); ++k) inv[perm[k]] = static_cast<Index>(k);
  return inv;
}

}  // namespace paramqp::solver
