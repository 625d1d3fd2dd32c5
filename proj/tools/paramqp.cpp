// paramqp command-line front end.

#include <chrono>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "paramqp/bench/bench.hpp"
#include "paramqp/canon/canonicalize.hpp"
#include "paramqp/canon/maps.hpp"
#include "paramqp/codegen/fixtures.hpp"
#include "paramqp/codegen/generate.hpp"
#include "paramqp/codegen/harness.hpp"
#include "paramqp/codegen/report.hpp"
#include "paramqp/dsl/dpp.hpp"
#include "paramqp/dsl/parse.hpp"
#include "paramqp/pipeline.hpp"
#include "paramqp/zoo/mpc.hpp"
#include "paramqp/zoo/portfolio.hpp"

using namespace paramqp;
using nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Writes to `path`, or stdout when path is empty or "-".
void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << text;
}

json csc_json(const CscMatrix& m) {
  json j{{"nrows", m.nrows}, {"ncols", m.ncols}, {"col_ptr", m.col_ptr}, {"row_idx", m.row_idx}};
  j["values"] = m.values;
  return j;
}

// Flat theta from a parameter-values file; every parameter must be given.
DenseVec theta_from_file(const Problem& p, const std::string& path) {
  const auto values = parse_parameter_values(p, read_file(path));
  Assignment a;
  for (const auto& prm : p.parameters()) {
    const auto it = values.find(prm->name);
    if (it == values.end()) throw SymbolError("parameter file: no value for '" + prm->name + "'");
    a.set(prm, it->second);
  }
  return flatten_parameters(p, a);
}

Settings settings_from(double eps, int max_iter, double rho) {
  Settings s;
  s.eps_abs = eps;
  s.eps_rel = eps;
  s.max_iter = max_iter;
  s.rho = rho;
  return s;
}

std::string trace_csv(const zoo::SimTrace& t) {
  std::ostringstream os;
  os.precision(12);
  os << "step,objective,iterations,wall_ns,refactorized,feasibility_violation\n";
  for (const auto& r : t.records)
    os << r.step << ',' << r.objective << ',' << r.iterations << ',' << r.wall_ns << ',' << (r.refactorized ? 1 : 0)
       << ',' << r.feasibility_violation << '\n';
  return os.str();
}

int cmd_canonicalize(const std::string& problem_path, const std::string& values_path, const std::string& out) {
  const Problem p = parse_problem(read_file(problem_path));
  const auto c = canonicalize(p);
  json j;
  j["name"] = p.name();
  j["n_tilde"] = c.qp.n_tilde;
  j["m_tilde"] = c.qp.m_tilde;
  j["theta_size"] = c.cmap.theta_size();
  json segs = json::object();
  for (const auto s : kAllSegments)
    segs[std::string(segment_name(s))] = {{"offset", c.qp.segment(s).offset}, {"length", c.qp.segment(s).length}};
  j["segments"] = segs;
  // Pattern values are filled in only when parameter values are supplied.
  json P = csc_json(c.qp.P_pattern), A = csc_json(c.qp.A_pattern);
  P["values"] = json::array();
  A["values"] = json::array();
  if (!values_path.empty()) {
    const auto tt = eval_params(c.cmap, theta_from_file(p, values_path));
    const QpData qp = c.qp.unpack(tt);
    P["values"] = qp.P.values;
    A["values"] = qp.A.values;
    j["q"] = qp.q;
    // Infinite bounds print as null.
    j["l"] = qp.l;
    j["u"] = qp.u;
    j["theta_tilde"] = tt;
  }
  j["P_pattern"] = P;
  j["A_pattern"] = A;
  j["C"] = csc_json(c.cmap.C);
  j["R"] = csc_json(c.rmap.R);
  j["R_selector"] = c.rmap.selector;
  json deps = json::array();
  for (const auto& d : c.deps.params) {
    json names = json::array();
    for (const auto s : d.segments) names.push_back(std::string(segment_name(s)));
    deps.push_back({{"parameter", d.name}, {"segments", names}, {"rows", d.rows}});
  }
  j["dependencies"] = deps;
  emit(out, j.dump(2) + "\n");
  return 0;
}

int cmd_solve(const std::string& problem_path, const std::string& values_path, const Settings& s) {
  const Problem p = parse_problem(read_file(problem_path));
  ParametricSolver ps(p, s);
  ps.set_theta(theta_from_file(p, values_path));
  const Solution sol = ps.solve();
  json x = json::object();
  for (const auto& v : p.variables()) x[v->name] = ps.value(v);
  json j{{"status", std::string(status_name(sol.status))},
         {"iterations", sol.iterations},
         {"objective", ps.user_objective()},
         {"primal_residual", sol.primal_res},
         {"dual_residual", sol.dual_res},
         {"x", x}};
  std::cout << j.dump(2) << "\n";
  return sol.status == Status::solved ? 0 : 2;
}

int cmd_generate(const std::string& problem_path, const std::string& values_path, const std::string& out_dir,
                 codegen::GenConfig cfg, const std::string& cc) {
  const Problem p = parse_problem(read_file(problem_path));
  const auto report = check_dpp(p);
  if (!report.compliant) {
    for (const auto& v : report.violations) std::cerr << "not DPP: " << v.path << ": " << v.reason << "\n";
    return 1;
  }
  const auto c = canonicalize(p);
  std::vector<codegen::FixtureCase> fx;
  if (!values_path.empty()) fx = codegen::record_fixtures(p, {theta_from_file(p, values_path)}, cfg.settings);
  else cfg.emit_fixtures = false;
  if (cfg.family_name.empty()) cfg.family_name = p.name();
  const auto bundle = codegen::generate(c, cfg, fx);
  codegen::write_bundle(bundle, out_dir);
  const auto sizes = codegen::emit_report(bundle, cc);
  json files = json::array();
  for (const auto& f : sizes.files) {
    json e{{"name", f.name}, {"source_bytes", f.source_bytes}};
    if (f.object_bytes) e["object_bytes"] = *f.object_bytes;
    files.push_back(e);
  }
  json j{{"directory", out_dir},
         {"files", files},
         {"total_bytes", bundle.manifest.total_bytes},
         {"static_bytes", bundle.manifest.static_bytes},
         {"fixture_cases", bundle.manifest.fixture_cases}};
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_harness(const std::string& dir, const std::string& cc) {
  const auto r = codegen::run_harness(dir, cc);
  std::cout << r.to_json().dump(2) << "\n";
  return r.passed() ? 0 : 1;
}

int cmd_simulate_mpc(int horizon, int steps, std::uint64_t seed, const Settings& s, const std::string& out) {
  const auto f = zoo::build_mpc(horizon);
  const auto d = zoo::mpc_data(zoo::MpcConstants{});
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  DenseVec z0(6);
  for (std::size_t i = 0; i < 6; ++i) z0[i] = (i < 3 ? 1.0 : 0.5) * g(rng);
  const auto trace = zoo::simulate_mpc(f, d, d.A, d.B, z0, steps, s);
  emit(out, trace_csv(trace));
  std::cerr << "factorizations: " << trace.factorizations << "\n";
  return 0;
}

int cmd_backtest(int assets, int periods, std::uint64_t seed, const Settings& s, const std::string& out) {
  const auto f = zoo::build_portfolio(assets);
  const auto trace = zoo::backtest(f, periods, seed, s);
  emit(out, trace_csv(trace));
  std::cerr << "factorizations: " << trace.factorizations << "\n";
  return 0;
}

int cmd_bench(bench::BenchConfig cfg, const std::string& family, const std::string& csv_out,
              const std::string& json_out) {
  cfg.family = bench::parse_family(family);
  if (cfg.sizes.empty()) cfg.sizes = bench::default_sizes(cfg.family);
  const auto rep = bench::run_bench(cfg);
  emit(csv_out, bench::to_csv(rep));
  const std::string summary = bench::to_json(rep).dump(2) + "\n";
  if (json_out.empty())
    std::cerr << summary;
  else
    emit(json_out, summary);
  for (const auto& r : rep.results)
    if (!r.valid) return 1;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"paramqp: parametrized QP modeling, caching solver and C code generation"};
  app.require_subcommand(1);

  double eps = 1e-5, rho = 0.1;
  int max_iter = 20000;
  auto solver_opts = [&](CLI::App* sub) {
    sub->add_option("--eps", eps, "absolute and relative tolerance");
    sub->add_option("--max-iter", max_iter, "ADMM iteration limit");
    sub->add_option("--rho", rho, "ADMM step size");
  };

  std::string problem, values, out;

  auto* canon = app.add_subcommand("canonicalize", "dump canonical patterns, C and R as JSON");
  canon->add_option("problem", problem, "problem file")->required()->check(CLI::ExistingFile);
  canon->add_option("--values", values, "parameter values; adds theta_tilde")->check(CLI::ExistingFile);
  canon->add_option("-o,--out", out, "output file (default stdout)");

  auto* solve = app.add_subcommand("solve", "solve one instance and print the result as JSON");
  solve->add_option("problem", problem, "problem file")->required()->check(CLI::ExistingFile);
  solve->add_option("values", values, "parameter values file")->required()->check(CLI::ExistingFile);
  solver_opts(solve);

  codegen::GenConfig gen_cfg;
  std::string out_dir, cc;
  int iteration_cap = 0;
  bool no_fixtures = false;
  auto* gen = app.add_subcommand("generate", "emit a C solver bundle");
  gen->add_option("problem", problem, "problem file")->required()->check(CLI::ExistingFile);
  gen->add_option("-o,--out", out_dir, "output directory")->required();
  gen->add_option("--values", values, "parameter values recorded as a fixture case")->check(CLI::ExistingFile);
  gen->add_option("--prefix", gen_cfg.prefix, "C identifier prefix");
  gen->add_option("--float-width", gen_cfg.float_width, "32 or 64");
  gen->add_option("--iteration-cap", iteration_cap, "per-solve iteration cap in the generated solver");
  gen->add_flag("--no-fixtures", no_fixtures, "do not emit the fixtures file");
  gen->add_option("--cc", cc, "C compiler used to report object sizes");
  solver_opts(gen);

  std::string bundle_dir;
  std::string harness_cc = "cc";
  auto* harness = app.add_subcommand("run-harness", "compile a bundle and replay its fixtures");
  harness->add_option("bundle_dir", bundle_dir, "bundle directory")->required()->check(CLI::ExistingDirectory);
  harness->add_option("--cc", harness_cc, "C compiler");

  int horizon = 6, steps = 100, assets = 10, periods = 500;
  std::uint64_t seed = 1;
  auto* sim = app.add_subcommand("simulate-mpc", "closed-loop MPC simulation, CSV trace");
  sim->add_option("--horizon", horizon, "MPC horizon H");
  sim->add_option("--steps", steps, "simulation steps");
  sim->add_option("--seed", seed, "initial-state seed");
  sim->add_option("-o,--out", out, "CSV file (default stdout)");
  solver_opts(sim);

  auto* bt = app.add_subcommand("backtest", "portfolio back-test, CSV trace");
  bt->add_option("--assets", assets, "number of assets N");
  bt->add_option("--periods", periods, "periods");
  bt->add_option("--seed", seed, "market seed");
  bt->add_option("-o,--out", out, "CSV file (default stdout)");
  solver_opts(bt);

  bench::BenchConfig bench_cfg;
  std::string family = "portfolio", json_out;
  double onetime_ms = -1.0;
  auto* bench_cmd = app.add_subcommand("bench", "cached vs full-pipeline timing");
  bench_cmd->add_option("--family", family, "mpc or portfolio");
  bench_cmd->add_option("--sizes", bench_cfg.sizes, "H or N values (default: the documented list)");
  bench_cmd->add_option("--steps", bench_cfg.steps, "solves per size");
  bench_cmd->add_option("--repeats", bench_cfg.repeats, "timed repeats (>= 3)");
  bench_cmd->add_option("--warmup", bench_cfg.warmup, "untimed leading steps per repeat");
  bench_cmd->add_option("--seed", bench_cfg.seed, "workload seed");
  bench_cmd->add_option("--onetime-ms", onetime_ms, "one-time cost for break-even (default: measured generation)");
  bench_cmd->add_option("-o,--out", out, "CSV file (default stdout)");
  bench_cmd->add_option("--json", json_out, "JSON summary file (default stderr)");

  CLI11_PARSE(app, argc, argv);

  try {
    const Settings s = settings_from(eps, max_iter, rho);
    if (*canon) return cmd_canonicalize(problem, values, out);
    if (*solve) return cmd_solve(problem, values, s);
    if (*gen) {
      gen_cfg.settings = s;
      gen_cfg.iteration_cap = iteration_cap;
      gen_cfg.emit_fixtures = !no_fixtures;
      return cmd_generate(problem, no_fixtures ? std::string() : values, out_dir, gen_cfg, cc);
    }
    if (*harness) return cmd_harness(bundle_dir, harness_cc);
    if (*sim) return cmd_simulate_mpc(horizon, steps, seed, s, out);
    if (*bt) return cmd_backtest(assets, periods, seed, s, out);
    if (*bench_cmd) {
      if (onetime_ms >= 0) bench_cfg.onetime_ms = onetime_ms;
      return cmd_bench(bench_cfg, family, out, json_out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
