#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "surfgest/config.hpp"

namespace surfgest::cli {

// Run directory layout:
//   config.cfg            canonical pipeline config, written once
//   manifest.json         one record per completed step
//   corpus/               index.json, recordings/, truth/, annotations/
//   windows/windows.bin   model-ready window store
//   train/<SPLIT>_g<N>/   metrics.json, confusion.csv, fold_<k>.sepw
//   eval/, search/, report/
class RunDir {
 public:
  explicit RunDir(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path operator/(const std::string& rel) const { return root_ / rel; }

  // Resolves the run config: an explicit file wins and is recorded on first
  // use; later steps must agree with the recorded one. Without either, the
  // defaults apply. Command-line overrides are applied before the comparison.
  config::PipelineConfig resolve_config(const std::filesystem::path& explicit_path,
                                        const std::function<void(config::PipelineConfig&)>& overrides);

  bool step_done(const std::string& step) const;
  void record_step(const std::string& step, nlohmann::json details);

 private:
  nlohmann::json load_manifest() const;

  std::filesystem::path root_;
};

// 64-bit FNV-1a, hex encoded.
std::string fingerprint(const std::string& text);

// Writes text to path via a sibling temp file and rename.
void write_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace surfgest::cli
