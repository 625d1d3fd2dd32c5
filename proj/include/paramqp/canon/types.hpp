#pragma once

#include <array>
#include <string>
#include <vector>

#include "paramqp/dsl/expr.hpp"
#include "paramqp/sparse/csc.hpp"
#include "paramqp/sparse/layout.hpp"

namespace paramqp {

// Blocks of the canonical parameter vector, in storage order.
enum class Segment { P = 0, q = 1, l = 2, u = 3, A = 4 };
inline constexpr std::array<Segment, 5> kAllSegments{Segment::P, Segment::q, Segment::l, Segment::u, Segment::A};

inline std::string_view segment_name(Segment s) {
  switch (s) {
    case Segment::P: return "P";
    case Segment::q: return "q";
    case Segment::l: return "l";
    case Segment::u: return "u";
    case Segment::A: return "A";
  }
  return "?";
}

inline bool is_matrix_segment(Segment s) noexcept { return s == Segment::P || s == Segment::A; }

struct SegmentRange {
  Index offset = 0;
  Index length = 0;
  bool contains(Index row) const noexcept { return row >= offset && row < offset + length; }
};

// The standard form  minimize 1/2 x'Px + q'x  s.t.  l <= Ax <= u.
struct QpData {
  CscMatrix P;  // upper triangle
  DenseVec q;
  CscMatrix A;
  DenseVec l;
  DenseVec u;
};

// Canonical problem structure. Patterns are frozen; values come from the
// canonical parameter vector theta_tilde = C [theta; 1].
struct CanonQP {
  Index n_tilde = 0;
  Index m_tilde = 0;
  CscMatrix P_pattern;  // upper triangular, values unset
  CscMatrix A_pattern;
  std::array<SegmentRange, 5> segments{};

  const SegmentRange& segment(Segment s) const { return segments[static_cast<std::size_t>(s)]; }
  Index theta_tilde_size() const { return segments.back().offset + segments.back().length; }

  Segment segment_of(Index row) const {
    for (const auto s : kAllSegments)
      if (segment(s).contains(row)) return s;
    throw DimensionError("canonical row " + std::to_string(row) + " outside every segment");
  }

  // Fills patterns and vectors from theta_tilde.
  QpData unpack(std::span<const double> theta_tilde) const {
    if (theta_tilde.size() != static_cast<std::size_t>(theta_tilde_size()))
      throw DimensionError("unpack: theta_tilde length mismatch");
    auto block = [&](Segment s) {
      const auto& r = segment(s);
      return std::vector<double>(theta_tilde.begin() + r.offset, theta_tilde.begin() + r.offset + r.length);
    };
    QpData d{P_pattern, block(Segment::q), A_pattern, block(Segment::l), block(Segment::u)};
    d.P.values = block(Segment::P);
    d.A.values = block(Segment::A);
    return d;
  }
};

// theta_tilde = C [theta; 1]; the last column of C is the constant term.
struct AffineMap {
  CscMatrix C;
  CscMatrix C_rows;  // transpose of C, for row-wise recomputation
  FlattenLayout layout;

  Index theta_size() const noexcept { return layout.size(); }
};

struct VariableBlock {
  std::string name;
  Shape shape;
  Index offset = 0;  // into the retrieved user-variable vector
};

// x = R [x_tilde; 1].
struct RetrievalMap {
  CscMatrix R;
  // Every row has a single unit entry in the variable block and no constant.
  bool selector = false;
  // For selectors: x[i] = x_tilde[source[i]].
  std::vector<Index> source;
  std::vector<VariableBlock> blocks;
};

struct ParamDependency {
  int param_id = 0;
  std::string name;
  std::vector<Segment> segments;  // touched segments, storage order
  std::vector<Index> rows;        // sorted rows of C touched by this parameter
  std::array<std::vector<Index>, 5> rows_by_segment;
};

struct DependencyTable {
  std::vector<ParamDependency> params;  // declaration order
  std::vector<int> column_owner;        // theta column -> parameter id

  const ParamDependency& of(int param_id) const {
    for (const auto& p : params)
      if (p.param_id == param_id) return p;
    throw SymbolError("dependency table: unknown parameter id " + std::to_string(param_id));
  }
};

struct Canonicalization {
  CanonQP qp;
  AffineMap cmap;
  RetrievalMap rmap;
  DependencyTable deps;
};

}  // namespace paramqp
