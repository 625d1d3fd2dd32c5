#pragma once

// Emits a freestanding C99 source bundle for one canonicalized problem family:
// static workspace data, per-parameter update entry points, dirty-row
// canonicalization, the cached-factorization ADMM kernel and retrieval.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "paramqp/canon/types.hpp"
#include "paramqp/solver/admm.hpp"

namespace paramqp::codegen {

struct GenConfig {
  std::string prefix = "cpg";
  int float_width = 64;  // 32 or 64
  bool emit_fixtures = true;
  std::string output_dir;  // used by write_bundle
  Settings settings{};
  // Hard iteration cap for real-time use; 0 keeps settings.max_iter.
  int iteration_cap = 0;
  std::string family_name = "problem";
};

// One replayed solve. `updates` lists the parameters pushed before the solve
// with their dense column-major values.
struct FixtureCase {
  std::vector<std::pair<int, DenseVec>> updates;
  DenseVec theta;
  DenseVec theta_tilde;
  DenseVec x_tilde;
  DenseVec x;
  int status = 0;
};

struct GeneratedFile {
  std::string name;
  std::string text;
};

struct Manifest {
  std::vector<std::string> files;
  std::size_t total_bytes = 0;
  std::size_t static_bytes = 0;
  // Counts behind static_bytes.
  std::size_t nnz_C = 0;
  std::size_t pattern_entries = 0;   // integer index-table entries
  std::size_t workspace_length = 0;  // floating-point workspace entries
  std::size_t fixture_cases = 0;
  int float_bytes = 8;
};

struct SourceBundle {
  std::string prefix;
  std::vector<GeneratedFile> files;
  Manifest manifest;

  const GeneratedFile* find(std::string_view name) const {
    for (const auto& f : files)
      if (f.name == name) return &f;
    return nullptr;
  }
  const std::string& text(std::string_view name) const {
    const auto* f = find(name);
    if (!f) throw CodegenError("bundle has no file '" + std::string(name) + "'");
    return f->text;
  }
};

namespace detail {

inline const std::set<std::string>& c_keywords() {
  static const std::set<std::string> k{
      "auto",     "break",  "case",    "char",   "const",    "continue", "default",  "do",
      "double",   "else",   "enum",    "extern", "float",    "for",      "goto",     "if",
      "inline",   "int",    "long",    "register", "restrict", "return", "short",    "signed",
      "sizeof",   "static", "struct",  "switch", "typedef",  "union",    "unsigned", "void",
      "volatile", "while",  "_Bool",   "_Complex", "_Imaginary"};
  return k;
}

inline std::string upper(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

inline std::string literal(double v) {
  if (std::isinf(v)) return v > 0 ? "1e30" : "-1e30";
  if (std::isnan(v)) throw CodegenError("cannot emit NaN constant");
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  std::string s = buf;
  if (s.find_first_of(".e") == std::string::npos) s += ".0";
  return s;
}

class Writer {
 public:
  Writer& operator<<(std::string_view s) {
    out_ += s;
    return *this;
  }
  Writer& operator<<(long long v) {
    out_ += std::to_string(v);
    return *this;
  }
  Writer& operator<<(int v) { return *this << static_cast<long long>(v); }
  Writer& operator<<(std::size_t v) { return *this << static_cast<long long>(v); }

  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

}  // namespace detail

// Throws when a count does not fit the emitted 32-bit index type.
inline void check_index_range(std::string_view what, std::int64_t value) {
  if (value < 0 || value > std::numeric_limits<std::int32_t>::max())
    throw CodegenError(std::string(what) + " (" + std::to_string(value) + ") does not fit 32-bit indices");
}

inline bool valid_prefix(std::string_view p) {
  if (!is_identifier(p)) return false;
  return !detail::c_keywords().count(std::string(p));
}

inline SourceBundle generate(const Canonicalization& canon, const GenConfig& config,
                             std::span<const FixtureCase> fixtures = {}) {
  using detail::literal;
  using detail::Writer;
  if (!valid_prefix(config.prefix)) throw CodegenError("invalid C identifier prefix '" + config.prefix + "'");
  if (config.float_width != 32 && config.float_width != 64)
    throw CodegenError("float width must be 32 or 64, got " + std::to_string(config.float_width));
  config.settings.validate();

  const auto& qp = canon.qp;
  const auto& cmap = canon.cmap;
  const auto& rmap = canon.rmap;
  const auto& deps = canon.deps;
  const std::string& pfx = config.prefix;
  const std::string PFX = detail::upper(pfx);
  const std::string ft = pfx + "_float";
  const std::string ws = pfx + "_ws_";

  const Index n = qp.n_tilde;
  const Index m = qp.m_tilde;
  const Index N = n + m;
  const Index d = cmap.theta_size();
  const Index tt = qp.theta_tilde_size();
  const Index np = static_cast<Index>(deps.params.size());
  const Index nx = static_cast<Index>(rmap.R.nrows);

  check_index_range("canonical parameter count", tt);
  check_index_range("nnz(C)", cmap.C.nnz());
  check_index_range("KKT dimension", static_cast<std::int64_t>(n) + m);

  const auto kkt = solver::build_kkt(qp.P_pattern, qp.A_pattern);
  const solver::LdlFactor sym(kkt.K);
  check_index_range("nnz(L)", sym.nnz_L());
  check_index_range("nnz(K)", kkt.K.nnz());

  // Identifiers derived from user names, plus the size macros; collisions abort.
  {
    std::map<std::string, std::string> seen;
    auto claim = [&](const std::string& id, const std::string& what) {
      const auto [it, fresh] = seen.emplace(id, what);
      if (!fresh) throw CodegenError("identifier collision on '" + id + "' between " + it->second + " and " + what);
    };
    for (const auto* fixed : {"solve", "iterations", "float"}) claim(pfx + "_" + fixed, "runtime");
    for (const auto& p : deps.params) {
      claim(pfx + "_update_" + p.name, "parameter " + p.name);
      claim(PFX + "_" + detail::upper(p.name) + "_SIZE", "parameter " + p.name);
    }
    for (const auto& b : rmap.blocks) {
      claim(pfx + "_get_" + b.name, "variable " + b.name);
      claim(PFX + "_" + detail::upper(b.name) + "_SIZE", "variable " + b.name);
    }
  }

  std::size_t pattern_entries = 0;
  std::size_t workspace_length = 0;
  auto len1 = [](std::size_t k) { return std::max<std::size_t>(k, 1); };

  auto int_array = [&](Writer& w, const std::string& name, const std::vector<Index>& v, bool is_const = true) {
    pattern_entries += v.size();
    w << (is_const ? "const int " : "int ") << name << "[" << len1(v.size()) << "]";
    if (!is_const && v.empty()) {
      w << ";\n";
      return;
    }
    w << " = {";
    if (v.empty()) w << "0";
    for (std::size_t k = 0; k < v.size(); ++k) {
      if (k % 16 == 0) w << "\n  ";
      w << static_cast<long long>(v[k]) << (k + 1 < v.size() ? ", " : "");
    }
    w << "\n};\n";
  };
  auto float_array = [&](Writer& w, const std::string& name, const std::vector<double>& v, bool is_const,
                         bool count_workspace = true) {
    if (count_workspace) workspace_length += v.size();
    w << (is_const ? "const " : "") << ft << " " << name << "[" << len1(v.size()) << "] = {";
    if (v.empty()) w << "0";
    for (std::size_t k = 0; k < v.size(); ++k) {
      if (k % 6 == 0) w << "\n  ";
      w << literal(v[k]) << (k + 1 < v.size() ? ", " : "");
    }
    w << "\n};\n";
  };
  auto zero_floats = [&](Writer& w, const std::string& name, std::size_t len) {
    workspace_length += len;
    w << ft << " " << name << "[" << len1(len) << "];\n";
  };
  auto zero_ints = [&](Writer& w, const std::string& name, std::size_t len) {
    pattern_entries += len;
    w << "int " << name << "[" << len1(len) << "];\n";
  };

  // C in row-major form (rows of theta_tilde).
  const CscMatrix& Cr = cmap.C_rows;

  // Per-parameter dependency rows and segment masks.
  std::vector<Index> dep_ptr{0}, dep_rows, dep_seg;
  for (const auto& p : deps.params) {
    dep_rows.insert(dep_rows.end(), p.rows.begin(), p.rows.end());
    dep_ptr.push_back(static_cast<Index>(dep_rows.size()));
    Index mask = 0;
    for (const auto s : p.segments) mask |= 1 << static_cast<int>(s);
    dep_seg.push_back(mask);
  }
  const auto& layout = cmap.layout;

  // Retrieval: contiguous selector blocks are returned as pointers into x.
  bool contiguous = rmap.selector;
  if (contiguous)
    for (std::size_t i = 0; i < rmap.source.size(); ++i)
      if (rmap.source[i] != static_cast<Index>(i)) contiguous = false;

  const GenConfig& cfg = config;
  const int max_iter = cfg.iteration_cap > 0 ? std::min(cfg.iteration_cap, cfg.settings.max_iter) : cfg.settings.max_iter;

  // ---------------------------------------------------------------- header
  Writer h;
  h << "#ifndef " << PFX << "_H\n#define " << PFX << "_H\n\n";
  h << "/* Generated solver for the \"" << cfg.family_name << "\" problem family.\n"
    << " * One static workspace; not re-entrant, call from a single thread only.\n"
    << " * Parameter values are dense, column-major. */\n\n";
  h << "typedef " << (cfg.float_width == 64 ? "double" : "float") << " " << ft << ";\n\n";
  for (const auto& p : deps.params) {
    const auto& blk = layout.blocks()[layout.block_of(p.param_id)];
    h << "#define " << PFX << "_" << detail::upper(p.name) << "_SIZE " << static_cast<long long>(blk.rows * blk.cols)
      << " /* " << static_cast<long long>(blk.rows) << "x" << static_cast<long long>(blk.cols) << " */\n";
  }
  for (const auto& b : rmap.blocks)
    h << "#define " << PFX << "_" << detail::upper(b.name) << "_SIZE " << static_cast<long long>(b.shape.size())
      << " /* " << static_cast<long long>(b.shape.rows) << "x" << static_cast<long long>(b.shape.cols) << " */\n";
  h << "\n";
  for (const auto& p : deps.params) h << "void " << pfx << "_update_" << p.name << "(const " << ft << "* values);\n";
  h << "\n/* 0 solved, 1 max_iter, 2 primal infeasible, 3 dual infeasible, -1 factorization breakdown */\n";
  h << "int " << pfx << "_solve(void);\n";
  for (const auto& b : rmap.blocks) h << "const " << ft << "* " << pfx << "_get_" << b.name << "(void);\n";
  h << "int " << pfx << "_iterations(void);\n\n#endif\n";

  // ------------------------------------------------------------- workspace
  Writer w;
  w << "#include \"" << pfx << ".h\"\n\n";
  w << "/* theta holds the flat parameters followed by the constant 1. */\n";
  {
    std::vector<double> theta0(static_cast<std::size_t>(d) + 1, 0.0);
    theta0.back() = 1.0;
    float_array(w, ws + "theta", theta0, false);
  }
  w << "unsigned char " << ws << "dirty[" << len1(static_cast<std::size_t>(np)) << "];\n";
  zero_floats(w, ws + "theta_tilde", static_cast<std::size_t>(tt));
  w << "\n/* canonicalization map, one row per canonical parameter */\n";
  int_array(w, ws + "C_rowptr", Cr.col_ptr);
  int_array(w, ws + "C_col", Cr.row_idx);
  float_array(w, ws + "C_val", Cr.values, true, false);
  int_array(w, ws + "dep_ptr", dep_ptr);
  int_array(w, ws + "dep_rows", dep_rows);
  int_array(w, ws + "dep_seg", dep_seg);
  for (Index k = 0; k < np; ++k) {
    const auto& blk = layout.blocks()[layout.block_of(deps.params[k].param_id)];
    if (!blk.sparsity) continue;
    std::vector<Index> pos;
    for (const auto& p : *blk.sparsity) pos.push_back(p.row + p.col * blk.rows);
    int_array(w, ws + "pos_" + std::to_string(k), pos);
  }
  w << "\n/* problem patterns */\n";
  int_array(w, ws + "P_colptr", qp.P_pattern.col_ptr);
  int_array(w, ws + "P_row", qp.P_pattern.row_idx);
  int_array(w, ws + "A_colptr", qp.A_pattern.col_ptr);
  int_array(w, ws + "A_row", qp.A_pattern.row_idx);
  w << "\n/* permuted KKT pattern and value maps */\n";
  int_array(w, ws + "K_colptr", kkt.K.col_ptr);
  int_array(w, ws + "K_row", kkt.K.row_idx);
  zero_floats(w, ws + "K_val", static_cast<std::size_t>(kkt.K.nnz()));
  int_array(w, ws + "perm", kkt.perm);
  int_array(w, ws + "P_to_K", kkt.P_to_K);
  int_array(w, ws + "A_to_K", kkt.A_to_K);
  int_array(w, ws + "sigma_to_K", kkt.sigma_to_K);
  int_array(w, ws + "rho_to_K", kkt.rho_to_K);
  w << "\n/* LDL factors */\n";
  int_array(w, ws + "etree", sym.etree());
  int_array(w, ws + "L_colptr", sym.Lp());
  zero_ints(w, ws + "L_row", static_cast<std::size_t>(sym.nnz_L()));
  zero_floats(w, ws + "L_val", static_cast<std::size_t>(sym.nnz_L()));
  zero_floats(w, ws + "D", static_cast<std::size_t>(N));
  zero_floats(w, ws + "Dinv", static_cast<std::size_t>(N));
  zero_floats(w, ws + "ldl_y", static_cast<std::size_t>(N));
  zero_ints(w, ws + "ldl_pattern", static_cast<std::size_t>(N));
  zero_ints(w, ws + "ldl_stack", static_cast<std::size_t>(N));
  zero_ints(w, ws + "ldl_next", static_cast<std::size_t>(N));
  pattern_entries += static_cast<std::size_t>(N);
  w << "unsigned char " << ws << "ldl_marked[" << len1(static_cast<std::size_t>(N)) << "];\n";
  w << "\n/* ADMM iterates and scratch */\n";
  for (const auto& [name, len] : std::vector<std::pair<std::string, Index>>{{"x", n},
                                                                           {"z", m},
                                                                           {"y", m},
                                                                           {"rho", m},
                                                                           {"rho_inv", m},
                                                                           {"rhs", N},
                                                                           {"work", N},
                                                                           {"x_prev", n},
                                                                           {"z_prev", m},
                                                                           {"y_prev", m},
                                                                           {"Ax", m},
                                                                           {"Px", n},
                                                                           {"Aty", n}})
    zero_floats(w, ws + name, static_cast<std::size_t>(len));
  w << "int " << ws << "factorizations;\n";
  w << "\n/* retrieval */\n";
  if (!contiguous) {
    zero_floats(w, ws + "x_user", static_cast<std::size_t>(nx));
    if (rmap.selector) {
      int_array(w, ws + "R_src", rmap.source);
    } else {
      const CscMatrix Rr = transpose(rmap.R);
      int_array(w, ws + "R_rowptr", Rr.col_ptr);
      int_array(w, ws + "R_col", Rr.row_idx);
      float_array(w, ws + "R_val", Rr.values, true);
    }
  } else {
    w << "/* selector retrieval: variables alias the leading entries of x */\n";
  }

  // ------------------------------------------------------------- canon unit
  Writer c;
  c << "#include \"" << pfx << ".h\"\n\n";
  c << "/* Parameter staging, dirty-row canonicalization and retrieval. */\n\n";
  c << "extern " << ft << " " << ws << "theta[];\n";
  c << "extern unsigned char " << ws << "dirty[];\n";
  c << "extern " << ft << " " << ws << "theta_tilde[];\n";
  c << "extern const int " << ws << "C_rowptr[];\nextern const int " << ws << "C_col[];\n";
  c << "extern const " << ft << " " << ws << "C_val[];\n";
  c << "extern const int " << ws << "dep_ptr[];\nextern const int " << ws << "dep_rows[];\nextern const int " << ws
    << "dep_seg[];\n";
  for (Index k = 0; k < np; ++k)
    if (layout.blocks()[layout.block_of(deps.params[k].param_id)].sparsity)
      c << "extern const int " << ws << "pos_" << std::to_string(k) << "[];\n";
  c << "extern " << ft << " " << ws << "x[];\n";
  if (!contiguous) {
    c << "extern " << ft << " " << ws << "x_user[];\n";
    if (rmap.selector) {
      c << "extern const int " << ws << "R_src[];\n";
    } else {
      c << "extern const int " << ws << "R_rowptr[];\nextern const int " << ws << "R_col[];\nextern const " << ft
        << " " << ws << "R_val[];\n";
    }
  }
  c << "\n";
  for (Index k = 0; k < np; ++k) {
    const auto& p = deps.params[k];
    const auto& blk = layout.blocks()[layout.block_of(p.param_id)];
    const Index off = layout.offset(p.param_id);
    const Index len = layout.length(p.param_id);
    c << "void " << pfx << "_update_" << p.name << "(const " << ft << "* values) {\n  int i;\n";
    c << "  for (i = 0; i < " << static_cast<long long>(len) << "; ++i) " << ws << "theta["
      << static_cast<long long>(off) << " + i] = values[";
    if (blk.sparsity)
      c << ws << "pos_" << std::to_string(k) << "[i]";
    else
      c << "i";
    c << "];\n  " << ws << "dirty[" << static_cast<long long>(k) << "] = 1;\n}\n\n";
  }
  c << "static void recompute_row(int r) {\n  int k;\n  " << ft << " acc = 0;\n";
  c << "  for (k = " << ws << "C_rowptr[r]; k < " << ws << "C_rowptr[r + 1]; ++k) acc += " << ws << "C_val[k] * "
    << ws << "theta[" << ws << "C_col[k]];\n";
  c << "  " << ws << "theta_tilde[r] = acc;\n}\n\n";
  c << "/* Recomputes every row (all != 0) or the rows of dirty parameters; returns\n"
    << " * the touched segments as bits P=1 q=2 l=4 u=8 A=16. */\n";
  c << "int " << ws << "canonicalize(int all) {\n  int p, k, mask = 0;\n";
  c << "  if (all) {\n    for (k = 0; k < " << static_cast<long long>(tt) << "; ++k) recompute_row(k);\n";
  c << "    for (p = 0; p < " << static_cast<long long>(np) << "; ++p) " << ws << "dirty[p] = 0;\n    return 31;\n  }\n";
  c << "  for (p = 0; p < " << static_cast<long long>(np) << "; ++p) {\n    if (!" << ws << "dirty[p]) continue;\n";
  c << "    for (k = " << ws << "dep_ptr[p]; k < " << ws << "dep_ptr[p + 1]; ++k) recompute_row(" << ws
    << "dep_rows[k]);\n";
  c << "    mask |= " << ws << "dep_seg[p];\n    " << ws << "dirty[p] = 0;\n  }\n  return mask;\n}\n\n";
  c << "void " << ws << "retrieve(void) {\n";
  if (contiguous) {
    c << "  /* selector: accessors point into x directly */\n";
  } else if (rmap.selector) {
    c << "  int i;\n  for (i = 0; i < " << static_cast<long long>(nx) << "; ++i) " << ws << "x_user[i] = " << ws
      << "x[" << ws << "R_src[i]];\n";
  } else {
    c << "  int i, k;\n  " << ft << " acc;\n";
    c << "  for (i = 0; i < " << static_cast<long long>(nx) << "; ++i) {\n    acc = 0;\n";
    c << "    for (k = " << ws << "R_rowptr[i]; k < " << ws << "R_rowptr[i + 1]; ++k)\n";
    c << "      acc += " << ws << "R_val[k] * (" << ws << "R_col[k] == " << static_cast<long long>(n) << " ? 1 : " << ws
      << "x[" << ws << "R_col[k]]);\n";
    c << "    " << ws << "x_user[i] = acc;\n  }\n";
  }
  c << "}\n\n";
  for (const auto& b : rmap.blocks) {
    c << "const " << ft << "* " << pfx << "_get_" << b.name << "(void) { return " << ws
      << (contiguous ? "x" : "x_user") << " + " << static_cast<long long>(b.offset) << "; }\n";
  }

  // -------------------------------------------------------------- solve unit
  const auto seg = [&](Segment s) { return static_cast<long long>(qp.segment(s).offset); };
  Writer s;
  s << "#include \"" << pfx << ".h\"\n\n";
  s << "/* Cached-factorization ADMM for  min 1/2 x'Px + q'x  s.t.  l <= Ax <= u.\n"
    << " * Problem data alias the canonical parameter vector. */\n\n";
  s << "#define NV " << static_cast<long long>(n) << "\n#define NC " << static_cast<long long>(m) << "\n#define NK "
    << static_cast<long long>(N) << "\n";
  s << "#define RHO " << literal(cfg.settings.rho) << "\n#define SIGMA " << literal(cfg.settings.sigma)
    << "\n#define ALPHA " << literal(cfg.settings.alpha) << "\n";
  s << "#define EPS_ABS " << literal(cfg.settings.eps_abs) << "\n#define EPS_REL " << literal(cfg.settings.eps_rel)
    << "\n#define EPS_PRIM_INF " << literal(cfg.settings.eps_prim_inf) << "\n#define EPS_DUAL_INF "
    << literal(cfg.settings.eps_dual_inf) << "\n";
  s << "#define MAX_ITER " << max_iter << "\n#define CHECK_INTERVAL " << cfg.settings.check_interval << "\n";
  s << "#define WARM_START " << (cfg.settings.warm_start ? 1 : 0) << "\n";
  s << "#define RHO_MIN " << literal(solver::kRhoMin) << "\n#define RHO_EQ_SCALE " << literal(solver::kRhoEqScale)
    << "\n#define INF_BOUND " << literal(solver::kInfBound) << "\n";
  s << "#define ABS(v) ((v) < 0 ? -(v) : (v))\n#define MAX(a, b) ((a) > (b) ? (a) : (b))\n\n";
  s << "#define P_VAL (" << ws << "theta_tilde + " << seg(Segment::P) << ")\n";
  s << "#define Q_VEC (" << ws << "theta_tilde + " << seg(Segment::q) << ")\n";
  s << "#define L_VEC (" << ws << "theta_tilde + " << seg(Segment::l) << ")\n";
  s << "#define U_VEC (" << ws << "theta_tilde + " << seg(Segment::u) << ")\n";
  s << "#define A_VAL (" << ws << "theta_tilde + " << seg(Segment::A) << ")\n\n";
  for (const auto* nm : {"theta_tilde", "K_val", "L_val", "D", "Dinv", "ldl_y", "x", "z", "y", "rho", "rho_inv", "rhs",
                         "work", "x_prev", "z_prev", "y_prev", "Ax", "Px", "Aty"})
    s << "extern " << ft << " " << ws << nm << "[];\n";
  for (const auto* nm : {"P_colptr", "P_row", "A_colptr", "A_row", "K_colptr", "K_row", "perm", "P_to_K", "A_to_K",
                         "sigma_to_K", "rho_to_K", "etree", "L_colptr"})
    s << "extern const int " << ws << nm << "[];\n";
  for (const auto* nm : {"L_row", "ldl_pattern", "ldl_stack", "ldl_next"}) s << "extern int " << ws << nm << "[];\n";
  s << "extern unsigned char " << ws << "ldl_marked[];\nextern int " << ws << "factorizations;\n";
  s << "int " << ws << "canonicalize(int all);\nvoid " << ws << "retrieve(void);\n\n";
  s << "static int initialized;\nstatic int iteration_count;\n\n";

  s << R"(static int ldl_factor(void) {
  int k, p, t, j, top, depth, i, b, c, slot;
  FT yc;
  for (k = 0; k < NK; ++k) {
    WS(ldl_next)[k] = WS(L_colptr)[k];
    WS(ldl_y)[k] = 0;
    WS(ldl_marked)[k] = 0;
  }
  for (k = 0; k < NK; ++k) {
    top = 0;
    WS(D)[k] = 0;
    for (p = WS(K_colptr)[k]; p < WS(K_colptr)[k + 1]; ++p) {
      b = WS(K_row)[p];
      if (b == k) {
        WS(D)[k] = WS(K_val)[p];
        continue;
      }
      WS(ldl_y)[b] = WS(K_val)[p];
      if (WS(ldl_marked)[b]) continue;
      depth = 0;
      for (i = b; i != -1 && i < k && !WS(ldl_marked)[i]; i = WS(etree)[i]) {
        WS(ldl_marked)[i] = 1;
        WS(ldl_stack)[depth++] = i;
      }
      while (depth > 0) WS(ldl_pattern)[top++] = WS(ldl_stack)[--depth];
    }
    for (t = top - 1; t >= 0; --t) {
      c = WS(ldl_pattern)[t];
      yc = WS(ldl_y)[c];
      for (j = WS(L_colptr)[c]; j < WS(ldl_next)[c]; ++j) WS(ldl_y)[WS(L_row)[j]] -= WS(L_val)[j] * yc;
      slot = WS(ldl_next)[c]++;
      WS(L_row)[slot] = k;
      WS(L_val)[slot] = yc * WS(Dinv)[c];
      WS(D)[k] -= yc * WS(L_val)[slot];
      WS(ldl_y)[c] = 0;
      WS(ldl_marked)[c] = 0;
    }
    if (WS(D)[k] == 0) return -1;
    WS(Dinv)[k] = 1 / WS(D)[k];
  }
  return 0;
}

static void ldl_solve(FT* v) {
  int i, j;
  for (i = 0; i < NK; ++i)
    for (j = WS(L_colptr)[i]; j < WS(L_colptr)[i + 1]; ++j) v[WS(L_row)[j]] -= WS(L_val)[j] * v[i];
  for (i = 0; i < NK; ++i) v[i] *= WS(Dinv)[i];
  for (i = NK - 1; i >= 0; --i)
    for (j = WS(L_colptr)[i]; j < WS(L_colptr)[i + 1]; ++j) v[i] -= WS(L_val)[j] * v[WS(L_row)[j]];
}

/* rho classes follow the bounds at factorization time */
static int refactor(void) {
  int i, k;
  FT r;
  for (i = 0; i < NC; ++i) {
    r = RHO;
    if (L_VEC[i] <= -INF_BOUND && U_VEC[i] >= INF_BOUND)
      r = RHO_MIN;
    else if (L_VEC[i] == U_VEC[i])
      r = RHO_EQ_SCALE * RHO;
    WS(rho)[i] = r;
    WS(rho_inv)[i] = 1 / r;
  }
  for (k = 0; k < NNZ_K; ++k) WS(K_val)[k] = 0;
  for (k = 0; k < NNZ_P; ++k) WS(K_val)[WS(P_to_K)[k]] += P_VAL[k];
  for (i = 0; i < NV; ++i) WS(K_val)[WS(sigma_to_K)[i]] += SIGMA;
  for (k = 0; k < NNZ_A; ++k) WS(K_val)[WS(A_to_K)[k]] = A_VAL[k];
  for (i = 0; i < NC; ++i) WS(K_val)[WS(rho_to_K)[i]] = -WS(rho_inv)[i];
  ++WS(factorizations);
  return ldl_factor();
}

static void mul_A(const FT* v, FT* out) {
  int i, j, k;
  for (i = 0; i < NC; ++i) out[i] = 0;
  for (j = 0; j < NV; ++j)
    for (k = WS(A_colptr)[j]; k < WS(A_colptr)[j + 1]; ++k) out[WS(A_row)[k]] += A_VAL[k] * v[j];
}

static void mul_At(const FT* v, FT* out) {
  int j, k;
  FT acc;
  for (j = 0; j < NV; ++j) {
    acc = 0;
    for (k = WS(A_colptr)[j]; k < WS(A_colptr)[j + 1]; ++k) acc += A_VAL[k] * v[WS(A_row)[k]];
    out[j] = acc;
  }
}

static void mul_P(const FT* v, FT* out) {
  int i, j, k;
  for (i = 0; i < NV; ++i) out[i] = 0;
  for (j = 0; j < NV; ++j)
    for (k = WS(P_colptr)[j]; k < WS(P_colptr)[j + 1]; ++k) {
      i = WS(P_row)[k];
      out[i] += P_VAL[k] * v[j];
      if (i != j) out[j] += P_VAL[k] * v[i];
    }
}

static FT norm_inf(const FT* v, int len) {
  int i;
  FT r = 0;
  for (i = 0; i < len; ++i) r = MAX(r, ABS(v[i]));
  return r;
}

static int converged(void) {
  int i;
  FT rp = 0, rd = 0, eps_p, eps_d;
  mul_A(WS(x), WS(Ax));
  mul_P(WS(x), WS(Px));
  mul_At(WS(y), WS(Aty));
  for (i = 0; i < NC; ++i) rp = MAX(rp, ABS(WS(Ax)[i] - WS(z)[i]));
  for (i = 0; i < NV; ++i) rd = MAX(rd, ABS(WS(Px)[i] + Q_VEC[i] + WS(Aty)[i]));
  eps_p = EPS_ABS + EPS_REL * MAX(norm_inf(WS(Ax), NC), norm_inf(WS(z), NC));
  eps_d = EPS_ABS + EPS_REL * MAX(MAX(norm_inf(WS(Px), NV), norm_inf(WS(Aty), NV)), norm_inf(Q_VEC, NV));
  return rp <= eps_p && rd <= eps_d;
}

/* dy is kept in y_prev, A'dy in Aty */
static int primal_infeasible(void) {
  int i;
  FT norm_dy, eps, support = 0;
  for (i = 0; i < NC; ++i) WS(y_prev)[i] = WS(y)[i] - WS(y_prev)[i];
  norm_dy = norm_inf(WS(y_prev), NC);
  if (norm_dy < 1e-30) return 0;
  eps = EPS_PRIM_INF * norm_dy;
  mul_At(WS(y_prev), WS(Aty));
  if (norm_inf(WS(Aty), NV) > eps) return 0;
  for (i = 0; i < NC; ++i) {
    if (WS(y_prev)[i] > 0) {
      if (U_VEC[i] >= INF_BOUND) {
        if (WS(y_prev)[i] > eps) return 0;
        continue;
      }
      support += U_VEC[i] * WS(y_prev)[i];
    } else if (WS(y_prev)[i] < 0) {
      if (L_VEC[i] <= -INF_BOUND) {
        if (-WS(y_prev)[i] > eps) return 0;
        continue;
      }
      support += L_VEC[i] * WS(y_prev)[i];
    }
  }
  return support < -eps;
}

/* dx is kept in x_prev */
static int dual_infeasible(void) {
  int i;
  FT norm_dx, eps, qdx = 0;
  for (i = 0; i < NV; ++i) WS(x_prev)[i] = WS(x)[i] - WS(x_prev)[i];
  norm_dx = norm_inf(WS(x_prev), NV);
  if (norm_dx < 1e-30) return 0;
  eps = EPS_DUAL_INF * norm_dx;
  mul_P(WS(x_prev), WS(Px));
  if (norm_inf(WS(Px), NV) > eps) return 0;
  for (i = 0; i < NV; ++i) qdx += Q_VEC[i] * WS(x_prev)[i];
  if (qdx > -eps) return 0;
  mul_A(WS(x_prev), WS(Ax));
  for (i = 0; i < NC; ++i) {
    if (U_VEC[i] < INF_BOUND && WS(Ax)[i] > eps) return 0;
    if (L_VEC[i] > -INF_BOUND && WS(Ax)[i] < -eps) return 0;
  }
  return 1;
}

static int admm(void) {
  int k, i, status = 1;
  FT zt, relaxed, zi;
  if (!WARM_START)
    for (i = 0; i < NK; ++i) {
      if (i < NV) WS(x)[i] = 0;
      if (i < NC) {
        WS(z)[i] = 0;
        WS(y)[i] = 0;
      }
    }
  for (k = 1; k <= MAX_ITER; ++k) {
    for (i = 0; i < NV; ++i) WS(x_prev)[i] = WS(x)[i];
    for (i = 0; i < NC; ++i) {
      WS(z_prev)[i] = WS(z)[i];
      WS(y_prev)[i] = WS(y)[i];
    }
    for (i = 0; i < NV; ++i) WS(rhs)[i] = SIGMA * WS(x_prev)[i] - Q_VEC[i];
    for (i = 0; i < NC; ++i) WS(rhs)[NV + i] = WS(z_prev)[i] - WS(rho_inv)[i] * WS(y)[i];
    for (i = 0; i < NK; ++i) WS(work)[i] = WS(rhs)[WS(perm)[i]];
    ldl_solve(WS(work));
    for (i = 0; i < NK; ++i) WS(rhs)[WS(perm)[i]] = WS(work)[i];
    for (i = 0; i < NV; ++i) WS(x)[i] = ALPHA * WS(rhs)[i] + (1 - ALPHA) * WS(x_prev)[i];
    for (i = 0; i < NC; ++i) {
      zt = WS(z_prev)[i] + WS(rho_inv)[i] * (WS(rhs)[NV + i] - WS(y)[i]);
      relaxed = ALPHA * zt + (1 - ALPHA) * WS(z_prev)[i];
      zi = relaxed + WS(rho_inv)[i] * WS(y)[i];
      if (zi < L_VEC[i]) zi = L_VEC[i];
      if (zi > U_VEC[i]) zi = U_VEC[i];
      WS(y)[i] += WS(rho)[i] * (relaxed - zi);
      WS(z)[i] = zi;
    }
    if (k % CHECK_INTERVAL == 0 || k == MAX_ITER) {
      if (converged()) {
        status = 0;
        break;
      }
      if (primal_infeasible()) {
        status = 2;
        break;
      }
      if (dual_infeasible()) {
        status = 3;
        break;
      }
    }
  }
  iteration_count = k > MAX_ITER ? MAX_ITER : k;
  return status;
}

int PFX_solve(void) {
  int status;
  if (!initialized) {
    WS(canonicalize)(1);
    if (refactor() != 0) return -1;
    initialized = 1;
  } else if (WS(canonicalize)(0) & (1 | 16)) {
    if (refactor() != 0) return -1;
  }
  status = admm();
  WS(retrieve)();
  return status;
}

int PFX_iterations(void) { return iteration_count; }
)";
  std::string solve_text = s.take();
  {
    // Expand the shorthand used in the kernel template above.
    auto replace_all = [](std::string& t, const std::string& from, const std::string& to) {
      for (std::size_t pos = 0; (pos = t.find(from, pos)) != std::string::npos; pos += to.size())
        t.replace(pos, from.size(), to);
    };
    const std::size_t body = solve_text.find("static int ldl_factor");
    std::string head = solve_text.substr(0, body);
    std::string kernel = solve_text.substr(body);
    std::string::size_type pos = 0;
    while ((pos = kernel.find("WS(", pos)) != std::string::npos) {
      const auto close = kernel.find(')', pos);
      const std::string name = kernel.substr(pos + 3, close - pos - 3);
      kernel.replace(pos, close - pos + 1, ws + name);
      pos += ws.size() + name.size();
    }
    replace_all(kernel, "PFX_", pfx + "_");
    replace_all(kernel, "FT ", ft + " ");
    replace_all(kernel, "FT* ", ft + "* ");
    head += "#define NNZ_P " + std::to_string(qp.P_pattern.nnz()) + "\n#define NNZ_A " +
            std::to_string(qp.A_pattern.nnz()) + "\n#define NNZ_K " + std::to_string(kkt.K.nnz()) + "\n\n";
    solve_text = head + kernel;
  }

  // --------------------------------------------------------------- fixtures
  std::vector<GeneratedFile> files;
  files.push_back({pfx + ".h", h.take()});
  files.push_back({pfx + "_workspace.c", w.take()});
  files.push_back({pfx + "_canon.c", c.take()});
  files.push_back({pfx + "_solve.c", std::move(solve_text)});

  const std::size_t ncases = cfg.emit_fixtures ? fixtures.size() : 0;
  if (cfg.emit_fixtures) {
    Writer f;
    f << "#include \"" << pfx << ".h\"\n\n/* Reference solves recorded from the in-process pipeline. */\n\n";
    f << "const int " << pfx << "_fx_cases = " << ncases << ";\n";
    std::vector<Index> updated, status;
    std::vector<std::vector<double>> per_param(static_cast<std::size_t>(np));
    std::vector<double> tt_all, x_all;
    for (const auto& fc : fixtures) {
      if (fc.theta_tilde.size() != static_cast<std::size_t>(tt) || fc.x.size() != static_cast<std::size_t>(nx))
        throw CodegenError("fixture case does not match the canonical dimensions");
      for (Index k = 0; k < np; ++k) {
        const auto& blk = layout.blocks()[layout.block_of(deps.params[k].param_id)];
        const auto size = static_cast<std::size_t>(blk.rows * blk.cols);
        const auto it = std::find_if(fc.updates.begin(), fc.updates.end(),
                                     [&](const auto& u) { return u.first == deps.params[k].param_id; });
        updated.push_back(it != fc.updates.end() ? 1 : 0);
        if (it != fc.updates.end()) {
          if (it->second.size() != size) throw CodegenError("fixture update has the wrong length");
          per_param[k].insert(per_param[k].end(), it->second.begin(), it->second.end());
        } else {
          per_param[k].insert(per_param[k].end(), size, 0.0);
        }
      }
      tt_all.insert(tt_all.end(), fc.theta_tilde.begin(), fc.theta_tilde.end());
      x_all.insert(x_all.end(), fc.x.begin(), fc.x.end());
      status.push_back(fc.status);
    }
    auto fx_floats = [&](const std::string& name, const std::vector<double>& v) {
      f << "const " << ft << " " << name << "[" << len1(v.size()) << "] = {";
      if (v.empty()) f << "0";
      for (std::size_t k = 0; k < v.size(); ++k) {
        if (k % 6 == 0) f << "\n  ";
        f << literal(v[k]) << (k + 1 < v.size() ? ", " : "");
      }
      f << "\n};\n";
    };
    auto fx_ints = [&](const std::string& name, const std::vector<Index>& v) {
      f << "const int " << name << "[" << len1(v.size()) << "] = {";
      if (v.empty()) f << "0";
      for (std::size_t k = 0; k < v.size(); ++k) {
        if (k % 16 == 0) f << "\n  ";
        f << static_cast<long long>(v[k]) << (k + 1 < v.size() ? ", " : "");
      }
      f << "\n};\n";
    };
    fx_ints(pfx + "_fx_updated", updated);
    for (Index k = 0; k < np; ++k) fx_floats(pfx + "_fx_param_" + std::to_string(k), per_param[k]);
    fx_floats(pfx + "_fx_theta_tilde", tt_all);
    fx_floats(pfx + "_fx_x", x_all);
    fx_ints(pfx + "_fx_status", status);
    files.push_back({pfx + "_fixtures.c", f.take()});
  }

  // ------------------------------------------------------------ example main
  {
    Writer e;
    e << "#include <stdio.h>\n#include \"" << pfx << ".h\"\n\n";
    e << "/* Replays the recorded fixtures (if any) and reports mismatches. Returns 0 on success. */\n\n";
    e << "#define NX " << static_cast<long long>(nx) << "\n#define NTT " << static_cast<long long>(tt) << "\n";
    e << "#define ABS(v) ((v) < 0 ? -(v) : (v))\n\n";
    e << "extern " << ft << " " << ws << "theta_tilde[];\n";
    if (cfg.emit_fixtures) {
      e << "extern const int " << pfx << "_fx_cases;\nextern const int " << pfx << "_fx_updated[];\n";
      for (Index k = 0; k < np; ++k) e << "extern const " << ft << " " << pfx << "_fx_param_" << std::to_string(k) << "[];\n";
      e << "extern const " << ft << " " << pfx << "_fx_theta_tilde[];\nextern const " << ft << " " << pfx
        << "_fx_x[];\nextern const int " << pfx << "_fx_status[];\n";
    }
    e << "\nstatic void gather_x(" << ft << "* out) {\n";
    if (nx > 0) e << "  int i;\n  const " << ft << "* v;\n";
    for (const auto& b : rmap.blocks) {
      e << "  v = " << pfx << "_get_" << b.name << "();\n  for (i = 0; i < " << static_cast<long long>(b.shape.size())
        << "; ++i) out[" << static_cast<long long>(b.offset) << " + i] = v[i];\n";
    }
    if (nx == 0) e << "  (void)out;\n";
    e << "}\n\nint main(void) {\n";
    e << "  static " << ft << " x[NX > 0 ? NX : 1];\n  int failures = 0, status;\n";
    if (cfg.emit_fixtures) {
      e << "  int c, i;\n  double err, scale;\n";
      e << "  for (c = 0; c < " << pfx << "_fx_cases; ++c) {\n";
      for (Index k = 0; k < np; ++k) {
        const auto& blk = layout.blocks()[layout.block_of(deps.params[k].param_id)];
        e << "    if (" << pfx << "_fx_updated[c * " << static_cast<long long>(np) << " + " << static_cast<long long>(k)
          << "]) " << pfx << "_update_" << deps.params[k].name << "(" << pfx << "_fx_param_" << std::to_string(k)
          << " + c * " << static_cast<long long>(blk.rows * blk.cols) << ");\n";
      }
      e << "    status = " << pfx << "_solve();\n    gather_x(x);\n";
      e << "    if (status != " << pfx << "_fx_status[c]) {\n      printf(\"case %d: status %d, expected %d\\n\", c, "
           "status, "
        << pfx << "_fx_status[c]);\n      ++failures;\n    }\n";
      e << "    for (i = 0; i < NTT; ++i) {\n      scale = ABS(" << pfx << "_fx_theta_tilde[c * NTT + i]);\n";
      e << "      err = ABS(" << ws << "theta_tilde[i] - " << pfx << "_fx_theta_tilde[c * NTT + i]);\n";
      e << "      if (err > 1e-12 * (scale > 1 ? scale : 1)) {\n        printf(\"case %d: theta_tilde[%d] off by "
           "%g\\n\", c, i, err);\n        ++failures;\n        break;\n      }\n    }\n";
      e << "    for (i = 0; i < NX; ++i) {\n      err = ABS(x[i] - " << pfx << "_fx_x[c * NX + i]);\n";
      e << "      if (err > 1e-6) {\n        printf(\"case %d: x[%d] off by %g\\n\", c, i, err);\n        ++failures;\n"
           "        break;\n      }\n    }\n  }\n";
      e << "  printf(\"{\\\"cases\\\": %d, \\\"failures\\\": %d}\\n\", " << pfx << "_fx_cases, failures);\n";
    } else {
      e << "  status = " << pfx << "_solve();\n  gather_x(x);\n";
      e << "  printf(\"status %d after %d iterations\\n\", status, " << pfx << "_iterations());\n";
      e << "  failures = status < 0;\n";
    }
    e << "  return failures == 0 ? 0 : 1;\n}\n";
    files.push_back({pfx + "_example_main.c", e.take()});
  }

  SourceBundle bundle;
  bundle.prefix = pfx;
  bundle.files = std::move(files);
  auto& mf = bundle.manifest;
  for (const auto& f : bundle.files) {
    mf.files.push_back(f.name);
    mf.total_bytes += f.text.size();
  }
  mf.nnz_C = static_cast<std::size_t>(cmap.C.nnz());
  mf.pattern_entries = pattern_entries;
  mf.workspace_length = workspace_length;
  mf.fixture_cases = ncases;
  mf.float_bytes = cfg.float_width / 8;
  mf.static_bytes = static_cast<std::size_t>(mf.float_bytes) * (mf.nnz_C + mf.pattern_entries + mf.workspace_length);
  return bundle;
}

inline void write_bundle(const SourceBundle& bundle, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& f : bundle.files) {
    std::ofstream out(dir / f.name, std::ios::binary);
    if (!out) throw CodegenError("cannot write " + (dir / f.name).string());
    out << f.text;
  }
}

}  // namespace paramqp::codegen
