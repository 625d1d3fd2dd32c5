#pragma once

#include <cstdlib>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "paramqp/codegen/generate.hpp"

namespace paramqp::codegen {

struct FileSize {
  std::string name;
  std::size_t source_bytes = 0;
  std::optional<std::size_t> object_bytes;
};

struct SizeReport {
  std::vector<FileSize> files;
  std::size_t source_bytes = 0;
  std::size_t static_bytes = 0;
  bool compiled = false;
};

// Source-level metrics always; object sizes only when `cc` names a working C
// compiler. A missing toolchain is not an error.
inline SizeReport emit_report(const SourceBundle& bundle, const std::string& cc = "") {
  SizeReport r;
  r.static_bytes = bundle.manifest.static_bytes;
  for (const auto& f : bundle.files) {
    r.files.push_back({f.name, f.text.size(), std::nullopt});
    r.source_bytes += f.text.size();
  }
  if (cc.empty() || std::system((cc + " --version > /dev/null 2>&1").c_str()) != 0) return r;

  namespace fs = std::filesystem;
  std::random_device rd;
  const fs::path dir = fs::temp_directory_path() / ("paramqp_report_" + std::to_string(rd()));
  write_bundle(bundle, dir);
  bool all = true;
  for (auto& f : r.files) {
    if (f.name.size() < 2 || f.name.substr(f.name.size() - 2) != ".c") continue;
    const fs::path obj = dir / (f.name + ".o");
    const std::string cmd =
        cc + " -std=c99 -Os -c " + (dir / f.name).string() + " -o " + obj.string() + " > /dev/null 2>&1";
    if (std::system(cmd.c_str()) == 0 && fs::exists(obj))
      f.object_bytes = static_cast<std::size_t>(fs::file_size(obj));
    else
      all = false;
  }
  r.compiled = all;
  fs::remove_all(dir);
  return r;
}

}  // namespace paramqp::codegen
