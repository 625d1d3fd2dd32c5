#pragma once

// Cached partial-update solving versus re-canonicalizing from scratch on every
// solve, over identical parameter sequences.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <json.hpp>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "paramqp/codegen/generate.hpp"
#include "paramqp/pipeline.hpp"
#include "paramqp/zoo/mpc.hpp"
#include "paramqp/zoo/portfolio.hpp"

namespace paramqp::bench {

enum class Family { mpc, portfolio };

inline std::string_view family_name(Family f) { return f == Family::mpc ? "mpc" : "portfolio"; }

inline Family parse_family(std::string_view s) {
  if (s == "mpc") return Family::mpc;
  if (s == "portfolio") return Family::portfolio;
  throw Error("unknown benchmark family '" + std::string(s) + "'");
}

inline const std::vector<Index>& default_sizes(Family f) {
  static const std::vector<Index> mpc{6, 12, 18, 30, 60};
  static const std::vector<Index> portfolio{10, 20, 40, 60, 100};
  return f == Family::mpc ? mpc : portfolio;
}

// Tight tolerances so the cached (warm) and full (cold) paths agree well
// inside the 1e-6 gate; at 1e-8 portfolio N=100 lands at ~1e-6. The default
// rho = 0.1 stalls there (primal residual plateaus while the dual residual is
// ~1e-13); rho = 1 does not.
inline Settings default_bench_settings() {
  Settings s;
  s.rho = 1.0;
  s.eps_abs = 1e-9;
  s.eps_rel = 1e-9;
  s.max_iter = 200000;
  return s;
}

struct BenchConfig {
  Family family = Family::portfolio;
  std::vector<Index> sizes;  // empty: the family's default list
  int steps = 500;           // simulation steps or back-test periods
  int repeats = 3;
  int warmup = 5;  // leading solves of every repeat left out of the statistics
  std::uint64_t seed = 1;
  Settings settings = default_bench_settings();
  double tolerance = 1e-6;               // solution-equivalence gate
  std::optional<double> onetime_ms;      // overrides the measured generation time

  void validate() const {
    if (repeats < 3) throw Error("bench: repeats must be at least 3");
    if (steps < 1) throw Error("bench: steps must be positive");
    if (warmup < 0 || warmup >= steps) throw Error("bench: warmup must lie in [0, steps)");
  }
};

struct TimingStats {
  double mean_ns = 0.0;
  double median_ns = 0.0;
  double p95_ns = 0.0;
  std::size_t samples = 0;
};

inline TimingStats summarize(std::vector<double> t) {
  TimingStats s;
  s.samples = t.size();
  if (t.empty()) return s;
  std::sort(t.begin(), t.end());
  double sum = 0.0;
  for (const double v : t) sum += v;
  s.mean_ns = sum / static_cast<double>(t.size());
  const std::size_t n = t.size();
  s.median_ns = n % 2 ? t[n / 2] : 0.5 * (t[n / 2 - 1] + t[n / 2]);
  // Nearest-rank percentile.
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n)));
  s.p95_ns = t[std::max<std::size_t>(rank, 1) - 1];
  return s;
}

// Smallest k >= 1 with onetime + k t_cached <= k t_full; nullopt when the
// cached path is not faster.
inline std::optional<long long> break_even(double t_full, double t_cached, double onetime) {
  if (!(t_full > t_cached)) return std::nullopt;
  if (onetime <= 0.0) return 1;
  const double k = std::ceil(onetime / (t_full - t_cached));
  return std::max(1LL, static_cast<long long>(k));
}

struct SizeResult {
  Index size = 0;
  int steps = 0;
  Index n_tilde = 0;
  Index m_tilde = 0;
  bool valid = false;
  std::string error;
  double max_solution_diff = 0.0;
  TimingStats full;
  TimingStats cached;
  double speedup = 0.0;
  int cached_factorizations = 0;
  std::uint64_t solution_hash = 0;  // over the cached-path solutions
  std::size_t generated_source_bytes = 0;
  std::size_t static_bytes = 0;
  double generation_ms = 0.0;
  double onetime_ms = 0.0;
  std::optional<long long> break_even;
};

struct BenchReport {
  Family family = Family::portfolio;
  std::uint64_t seed = 0;
  int repeats = 0;
  int warmup = 0;
  std::vector<SizeResult> results;
};

// Parameter sequence of a family run: flat theta per step, driven by the
// cached path (the closed loop and the chained weights depend on solutions).
struct Workload {
  Problem problem;
  std::vector<DenseVec> thetas;
};

inline Workload make_workload(Family family, Index size, int steps, std::uint64_t seed, const Settings& settings) {
  if (family == Family::mpc) {
    const auto f = zoo::build_mpc(size);
    const auto d = zoo::mpc_data(zoo::MpcConstants{});
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    DenseVec z0(6);
    for (int i = 0; i < 6; ++i) z0[static_cast<std::size_t>(i)] = (i < 3 ? 1.0 : 0.5) * g(rng);
    const auto trace = zoo::simulate_mpc(f, d, d.A, d.B, z0, steps, settings);
    Workload w{f.problem, {}};
    for (const auto& r : trace.records) w.thetas.push_back(r.theta);
    return w;
  }
  const auto f = zoo::build_portfolio(size);
  const auto trace = zoo::backtest(f, steps, seed, settings);
  Workload w{f.problem, {}};
  for (const auto& r : trace.records) w.thetas.push_back(r.theta);
  return w;
}

namespace detail {

// Parameters whose flat values differ from the previous step (all on step 0).
inline std::vector<std::vector<std::pair<Parameter, DenseVec>>> update_lists(const Problem& p,
                                                                             const std::vector<DenseVec>& thetas) {
  const auto layout = p.parameter_layout();
  std::vector<std::vector<std::pair<Parameter, DenseVec>>> out;
  for (std::size_t k = 0; k < thetas.size(); ++k) {
    std::vector<std::pair<Parameter, DenseVec>> ups;
    for (const auto& prm : p.parameters()) {
      const Index off = layout.offset(prm->id);
      const Index len = layout.length(prm->id);
      bool changed = k == 0;
      for (Index i = 0; i < len && !changed; ++i) changed = thetas[k][off + i] != thetas[k - 1][off + i];
      if (changed) ups.emplace_back(prm, layout.gather(prm->id, thetas[k]));
    }
    out.push_back(std::move(ups));
  }
  return out;
}

inline std::uint64_t hash_values(std::uint64_t h, const DenseVec& v) {
  for (const double x : v) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &x, sizeof bits);
    h ^= bits + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  }
  return h;
}

inline double elapsed_ns(std::chrono::steady_clock::time_point a, std::chrono::steady_clock::time_point b) {
  return static_cast<double>(std::chrono::duration_cast<std::chrono::nanoseconds>(b - a).count());
}

}  // namespace detail

inline SizeResult bench_size(const BenchConfig& cfg, Index size) {
  using clock = std::chrono::steady_clock;
  SizeResult r;
  r.size = size;
  r.steps = cfg.steps;
  const Workload wl = make_workload(cfg.family, size, cfg.steps, cfg.seed, cfg.settings);
  const auto updates = detail::update_lists(wl.problem, wl.thetas);

  // Cached path, once untimed: reference solutions and the equivalence gate.
  std::vector<DenseVec> cached_x;
  {
    ParametricSolver ps(wl.problem, cfg.settings);
    for (const auto& ups : updates) {
      for (const auto& [p, v] : ups) ps.set(p, v);
      ps.solve();
      cached_x.push_back(ps.x());
    }
    r.cached_factorizations = ps.factorizations();
    r.n_tilde = ps.canonical().qp.n_tilde;
    r.m_tilde = ps.canonical().qp.m_tilde;
  }
  for (const auto& x : cached_x) r.solution_hash = detail::hash_values(r.solution_hash, x);
  for (std::size_t k = 0; k < wl.thetas.size(); ++k) {
    DenseVec x;
    solve_from_scratch(wl.problem, wl.thetas[k], cfg.settings, &x);
    double diff = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) diff = std::max(diff, std::abs(x[i] - cached_x[k][i]));
    r.max_solution_diff = std::max(r.max_solution_diff, diff);
  }
  if (r.max_solution_diff > cfg.tolerance) {
    r.error = "cached and full paths disagree by " + std::to_string(r.max_solution_diff);
    return r;
  }

  std::vector<double> t_full, t_cached;
  for (int rep = 0; rep < cfg.repeats; ++rep) {
    ParametricSolver ps(wl.problem, cfg.settings);
    for (std::size_t k = 0; k < updates.size(); ++k) {
      const auto t0 = clock::now();
      for (const auto& [p, v] : updates[k]) ps.set(p, v);
      ps.solve();
      const auto t1 = clock::now();
      if (static_cast<int>(k) >= cfg.warmup) t_cached.push_back(detail::elapsed_ns(t0, t1));
    }
    for (std::size_t k = 0; k < wl.thetas.size(); ++k) {
      const auto t0 = clock::now();
      solve_from_scratch(wl.problem, wl.thetas[k], cfg.settings);
      const auto t1 = clock::now();
      if (static_cast<int>(k) >= cfg.warmup) t_full.push_back(detail::elapsed_ns(t0, t1));
    }
  }
  r.full = summarize(std::move(t_full));
  r.cached = summarize(std::move(t_cached));
  r.speedup = r.cached.median_ns > 0 ? r.full.median_ns / r.cached.median_ns : 0.0;

  const auto g0 = clock::now();
  const auto bundle = codegen::generate(canonicalize(wl.problem), codegen::GenConfig{});
  const auto g1 = clock::now();
  r.generation_ms = detail::elapsed_ns(g0, g1) * 1e-6;
  r.generated_source_bytes = bundle.manifest.total_bytes;
  r.static_bytes = bundle.manifest.static_bytes;
  r.onetime_ms = cfg.onetime_ms.value_or(r.generation_ms);
  r.break_even = break_even(r.full.median_ns, r.cached.median_ns, r.onetime_ms * 1e6);
  r.valid = true;
  return r;
}

inline BenchReport run_bench(const BenchConfig& cfg) {
  cfg.validate();
  BenchReport rep;
  rep.family = cfg.family;
  rep.seed = cfg.seed;
  rep.repeats = cfg.repeats;
  rep.warmup = cfg.warmup;
  const auto& sizes = cfg.sizes.empty() ? default_sizes(cfg.family) : cfg.sizes;
  for (const Index s : sizes) rep.results.push_back(bench_size(cfg, s));
  return rep;
}

inline std::string to_csv(const BenchReport& rep) {
  std::ostringstream o;
  o << "family,size,steps,valid,max_solution_diff,full_mean_ns,full_median_ns,full_p95_ns,cached_mean_ns,"
       "cached_median_ns,cached_p95_ns,speedup,cached_factorizations,source_bytes,static_bytes,onetime_ms,"
       "break_even\n";
  o.precision(10);
  for (const auto& r : rep.results) {
    o << family_name(rep.family) << ',' << r.size << ',' << r.steps << ',' << (r.valid ? 1 : 0) << ','
      << r.max_solution_diff << ',' << r.full.mean_ns << ',' << r.full.median_ns << ',' << r.full.p95_ns << ','
      << r.cached.mean_ns << ',' << r.cached.median_ns << ',' << r.cached.p95_ns << ',' << r.speedup << ','
      << r.cached_factorizations << ',' << r.generated_source_bytes << ',' << r.static_bytes << ',' << r.onetime_ms
      << ',' << (r.break_even ? std::to_string(*r.break_even) : std::string("unbounded")) << '\n';
  }
  return o.str();
}

inline nlohmann::json to_json(const BenchReport& rep) {
  auto stats = [](const TimingStats& s) {
    return nlohmann::json{{"mean_ns", s.mean_ns}, {"median_ns", s.median_ns}, {"p95_ns", s.p95_ns},
                           {"samples", s.samples}};
  };
  nlohmann::json j;
  j["family"] = family_name(rep.family);
  j["seed"] = rep.seed;
  j["repeats"] = rep.repeats;
  j["warmup"] = rep.warmup;
  j["results"] = nlohmann::json::array();
  for (const auto& r : rep.results) {
    nlohmann::json e{{"size", r.size},
                     {"steps", r.steps},
                     {"n_tilde", r.n_tilde},
                     {"m_tilde", r.m_tilde},
                     {"valid", r.valid},
                     {"max_solution_diff", r.max_solution_diff},
                     {"cached_factorizations", r.cached_factorizations},
                     {"solution_hash", r.solution_hash},
                     {"source_bytes", r.generated_source_bytes},
                     {"static_bytes", r.static_bytes}};
    // Timing fields are present (zero) for invalid runs so the schema stays fixed.
    e["error"] = r.error;
    e["full"] = stats(r.full);
    e["cached"] = stats(r.cached);
    e["speedup"] = r.speedup;
    e["generation_ms"] = r.generation_ms;
    e["onetime_ms"] = r.onetime_ms;
    e["break_even"] = r.break_even ? nlohmann::json(*r.break_even) : nlohmann::json("unbounded");
    j["results"].push_back(std::move(e));
  }
  return j;
}

}  // namespace paramqp::bench
