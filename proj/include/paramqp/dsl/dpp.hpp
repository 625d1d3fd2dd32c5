#pragma once

#include <string>
#include <vector>

#include "paramqp/dsl/problem.hpp"

namespace paramqp {

struct DppViolation {
  std::string path;    // e.g. "constraints[3]/args[1]/args[0]"
  std::string reason;
  Expr node;
};

struct DppReport {
  bool compliant = true;
  std::vector<DppViolation> violations;
};

namespace detail {
inline void check_dpp_node(const Expr& e, const std::string& path, std::vector<DppViolation>& out) {
  if (is_product(e.op())) {
    const auto& a = e.args()[0];
    const auto& b = e.args()[1];
    if (a.has_params() && b.has_params()) {
      out.push_back({path, "product of two parameter-dependent operands: " + describe(e), e});
    } else {
      for (const auto* side : {&a, &b}) {
        if (side->has_params() && !side->param_affine())
          out.push_back({path, "parameter operand is not parameter-affine: " + describe(e), e});
      }
    }
  }
  for (std::size_t k = 0; k < e.args().size(); ++k)
    check_dpp_node(e.args()[k], path + "/args[" + std::to_string(k) + "]", out);
}
}  // namespace detail

// A problem is DPP-compliant when every product has at most one
// parameter-dependent operand and that operand is parameter-affine.
// Non-compliance is reported, never thrown.
inline DppReport check_dpp(const Problem& p) {
  DppReport r;
  detail::check_dpp_node(p.objective(), "objective", r.violations);
  for (std::size_t i = 0; i < p.constraints().size(); ++i)
    detail::check_dpp_node(p.constraints()[i].expr, "constraints[" + std::to_string(i) + "]", r.violations);
  r.compliant = r.violations.empty();
  return r;
}

}  // namespace paramqp
