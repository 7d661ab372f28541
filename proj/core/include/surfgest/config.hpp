#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "surfgest/dataset.hpp"
#include "surfgest/detect.hpp"
#include "surfgest/model.hpp"
#include "surfgest/pipeline.hpp"
#include "surfgest/search.hpp"
#include "surfgest/synth.hpp"
#include "surfgest/train.hpp"

namespace surfgest::config {

// Sectioned key/value text:
//
//   # comment
//   [section]
//   key = value      # trailing comment
//
// Keys before the first header belong to section "". Errors carry
// "<source>:<line>:" prefixes.
class Document {
 public:
  struct Item {
    std::string section;
    std::string key;
    std::string value;
    std::size_t line = 0;
  };

  static Document parse(std::string_view text, std::string source = "<config>");
  static Document load(const std::filesystem::path& path);

  const std::string& source() const noexcept { return source_; }
  const std::vector<Item>& items() const noexcept { return items_; }

  // Each getter leaves out untouched when the key is absent and marks the key
  // as consumed when present. A malformed value throws ConfigError.
  bool get(const std::string& section, const std::string& key, std::string& out);
  bool get(const std::string& section, const std::string& key, double& out);
  bool get(const std::string& section, const std::string& key, int& out);
  bool get(const std::string& section, const std::string& key, std::uint64_t& out);
  bool get(const std::string& section, const std::string& key, bool& out);
  // Whitespace-separated list.
  bool get_list(const std::string& section, const std::string& key, std::vector<std::string>& out);

  // Throws ConfigError naming the first key no getter consumed.
  void reject_unknown() const;

  // "<source>:<line>: <message>" for the item behind section.key.
  [[noreturn]] void fail(const std::string& section, const std::string& key, const std::string& message) const;

 private:
  const Item* find(const std::string& section, const std::string& key);

  std::string source_;
  std::vector<Item> items_;
  std::vector<bool> used_;
};

struct SynthSection {
  synth::SynthConfig synth;
  int participants = 2;
  int sessions = 2;
};

struct SplitSection {
  SplitMethod method = SplitMethod::kPerSubject;
  SplitParams params;
  std::size_t gestures = 6;
};

struct SearchSection {
  search::SearchSpace space;
  std::size_t budget = 0;
  SplitParams split;
};

struct PipelineConfig {
  SynthSection synth;
  detect::DetectorConfig detector;
  PreprocessConfig preprocess;
  model::SepCnnConfig model;
  train::TrainConfig train;
  SplitSection split;
  SearchSection search;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;

  // Cross-section checks; module validators run on every section.
  void validate() const;
};

PipelineConfig parse_pipeline(std::string_view text, std::string source = "<config>");
PipelineConfig load_pipeline(const std::filesystem::path& path);
// Canonical text form; parse_pipeline(to_text(c)) reproduces c.
std::string to_text(const PipelineConfig& cfg);

// Stand-alone search space file: the keys of the [search] section, with or
// without the header.
search::SearchSpace parse_search_space(std::string_view text, std::string source = "<search>");
search::SearchSpace load_search_space(const std::filesystem::path& path);

}  // namespace surfgest::config
