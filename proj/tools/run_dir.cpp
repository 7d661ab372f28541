#include "run_dir.hpp"

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "surfgest/error.hpp"

namespace surfgest::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

std::string fingerprint(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_atomic(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out << text;
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

RunDir::RunDir(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

config::PipelineConfig RunDir::resolve_config(const fs::path& explicit_path,
                                              const std::function<void(config::PipelineConfig&)>& overrides) {
  const auto recorded = root_ / "config.cfg";
  config::PipelineConfig cfg;
  if (!explicit_path.empty()) {
    cfg = config::load_pipeline(explicit_path);
  } else if (fs::exists(recorded)) {
    cfg = config::parse_pipeline(read_text(recorded), recorded.string());
  }
  if (overrides) {
    overrides(cfg);
    cfg.validate();
  }
  const auto text = config::to_text(cfg);
  if (fs::exists(recorded)) {
    if (read_text(recorded) != text) {
      throw ConfigError(recorded.string() + ": the run directory was created with a different configuration; "
                        "use a fresh --out directory");
    }
  } else {
    write_atomic(recorded, text);
  }
  return cfg;
}

json RunDir::load_manifest() const {
  const auto path = root_ / "manifest.json";
  if (!fs::exists(path)) return {{"tool", "surfgest"}, {"steps", json::object()}};
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": unreadable manifest: " + e.what());
  }
}

bool RunDir::step_done(const std::string& step) const {
  const auto m = load_manifest();
  return m["steps"].contains(step);
}

void RunDir::record_step(const std::string& step, json details) {
  auto m = load_manifest();
  const auto cfg_path = root_ / "config.cfg";
  details["completed_at"] = utc_now();
  if (fs::exists(cfg_path)) details["config"] = fingerprint(read_text(cfg_path));
  m["steps"][step] = std::move(details);
  write_atomic(root_ / "manifest.json", m.dump(2) + "\n");
}

}  // namespace surfgest::cli
