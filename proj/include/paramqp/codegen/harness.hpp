#pragma once

// Compile-and-compare harness for a written bundle directory: builds every .c
// file with the host compiler, runs the example main (which replays the
// fixtures) and collects its verdicts. Needs a C toolchain; nothing else in
// the library does.

#include <sys/wait.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <regex>
#include <set>
#include <sstream>
#include <string>

#include "json.hpp"
#include "paramqp/error.hpp"

namespace paramqp::codegen {

struct HarnessReport {
  bool compiled = false;
  std::string compile_log;
  int exit_code = -1;
  int cases = 0;
  int failures = 0;
  std::set<int> failing_cases;
  std::vector<std::string> mismatches;            // lines printed by the example main
  std::map<std::string, std::size_t> object_bytes;  // per translation unit

  bool passed() const { return compiled && exit_code == 0 && failures == 0; }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["compiled"] = compiled;
    j["passed"] = passed();
    j["cases"] = cases;
    j["failures"] = failures;
    j["failing_cases"] = failing_cases;
    j["mismatches"] = mismatches;
    j["object_bytes"] = object_bytes;
    if (!compiled) j["compile_log"] = compile_log;
    return j;
  }
};

namespace detail {

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace detail

inline HarnessReport run_harness(const std::filesystem::path& bundle_dir, const std::string& cc = "cc") {
  namespace fs = std::filesystem;
  if (!fs::is_directory(bundle_dir)) throw Error("run_harness: not a directory: " + bundle_dir.string());
  std::vector<fs::path> sources;
  for (const auto& e : fs::directory_iterator(bundle_dir))
    if (e.path().extension() == ".c") sources.push_back(e.path());
  std::sort(sources.begin(), sources.end());
  if (sources.empty()) throw Error("run_harness: no C sources in " + bundle_dir.string());

  HarnessReport r;
  const fs::path build = bundle_dir / "harness_build";
  fs::create_directories(build);
  const std::string flags = " -std=c99 -O2 -Wall -Wextra -Werror -pedantic";
  const fs::path log = build / "cc.log";

  std::string objects;
  for (const auto& src : sources) {
    const fs::path obj = build / (src.filename().string() + ".o");
    const std::string cmd = cc + flags + " -c " + src.string() + " -o " + obj.string() + " > " + log.string() + " 2>&1";
    if (std::system(cmd.c_str()) != 0) {
      r.compile_log = detail::slurp(log);
      return r;
    }
    r.object_bytes[src.filename().string()] = static_cast<std::size_t>(fs::file_size(obj));
    objects += " " + obj.string();
  }
  const fs::path exe = build / "solver";
  if (std::system((cc + objects + " -o " + exe.string() + " > " + log.string() + " 2>&1").c_str()) != 0) {
    r.compile_log = detail::slurp(log);
    return r;
  }
  r.compiled = true;

  const fs::path out = build / "run.log";
  const int rc = std::system((exe.string() + " > " + out.string() + " 2>&1").c_str());
  r.exit_code = rc == -1 ? -1 : (WIFEXITED(rc) ? WEXITSTATUS(rc) : -1);

  const std::regex case_line(R"(^case (\d+): )");
  const std::regex summary(R"re(^\{"cases": (\d+), "failures": (\d+)\}$)re");
  std::istringstream lines(detail::slurp(out));
  for (std::string line; std::getline(lines, line);) {
    std::smatch m;
    if (std::regex_search(line, m, case_line)) {
      r.failing_cases.insert(std::stoi(m[1]));
      r.mismatches.push_back(line);
    } else if (std::regex_match(line, m, summary)) {
      r.cases = std::stoi(m[1]);
      r.failures = std::stoi(m[2]);
    }
  }
  return r;
}

}  // namespace paramqp::codegen
