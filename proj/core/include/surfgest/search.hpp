#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "surfgest/dataset.hpp"
#include "surfgest/model.hpp"
#include "surfgest/pipeline.hpp"
#include "surfgest/train.hpp"

namespace surfgest::search {

struct Band {
  double low_hz = 0.0;
  double high_hz = 0.0;
  bool operator==(const Band&) const = default;
};

// "none" or "225-375".
std::string band_label(const std::optional<Band>& band);
std::optional<Band> parse_band(const std::string& text);

struct SearchSpace {
  std::vector<std::optional<Band>> bandpass{std::nullopt, Band{225.0, 375.0}, Band{300.0, 450.0}};
  std::vector<int> downsample{1, 2, 5, 10};
  std::vector<double> window_ms{1000.0, 1250.0, 1500.0};
  std::vector<std::size_t> kernel{9, 15, 25, 33, 39};
  std::vector<std::pair<std::size_t, std::size_t>> blocks_width{{4, 16}, {4, 32}, {6, 16}, {6, 32}};
  std::vector<double> dropout{0.2, 0.3};

  // Throws ConfigError on an empty axis or a value no config could use.
  void validate() const;
  std::size_t size() const;
};

struct SearchConfig {
  std::size_t index = 0;  // position in enumeration order
  std::optional<Band> band;
  int downsample = 1;
  double window_ms = 1250.0;
  std::size_t kernel = 15;
  std::size_t blocks = 6;
  std::size_t width = 32;
  double dropout = 0.2;

  // Stable text key, e.g. "band=225-375 ds=2 win=1250 k=15 bw=6x32 p=0.2".
  std::string key() const;
  PreprocessConfig preprocess(const PreprocessConfig& base) const;
  model::SepCnnConfig model(const model::SepCnnConfig& base) const;
};

// Cartesian product, lexicographic with bandpass outermost and dropout
// innermost, so configs sharing a pre-processed variant are adjacent.
std::vector<SearchConfig> enumerate_configs(const SearchSpace& space);

struct SearchResult {
  SearchConfig config;
  bool skipped = false;
  std::string skip_reason;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;
  double mean_precision = 0.0;
  double std_precision = 0.0;
  std::vector<double> fold_accuracy;
  std::size_t param_count = 0;
  std::size_t rank = 0;  // 1-based; 0 for skipped configs
};

// Evaluated configs ordered by (-mean_accuracy, param_count, index) and
// ranked 1..n, followed by skipped configs in index order.
std::vector<SearchResult> rank_results(std::vector<SearchResult> results);

struct SearchOptions {
  PreprocessConfig base_preprocess;
  model::SepCnnConfig base_model;
  train::TrainConfig train;
  SplitParams split;  // pooled session folds
  std::size_t num_classes = 6;
  std::size_t budget = 0;  // 0 evaluates every config, else a seeded subset
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::filesystem::path journal;  // empty disables resume
  // Stop after this many new evaluations (0 = no limit).
  std::size_t max_new_evaluations = 0;
};

struct SearchOutcome {
  std::vector<SearchResult> leaderboard;
  std::size_t enumerated = 0;
  std::size_t selected = 0;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;
  std::size_t resumed = 0;  // taken from the journal
  std::size_t variants_built = 0;
  bool complete = false;
};

// Indices chosen by a budgeted run, ascending.
std::vector<std::size_t> select_budget(std::size_t total, std::size_t budget, std::uint64_t seed);

SearchOutcome run_search(const SearchSpace& space, const std::vector<LoadedSession>& sessions,
                         const SearchOptions& options);

void write_leaderboard_csv(const std::filesystem::path& path, const std::vector<SearchResult>& board);
void write_leaderboard_json(const std::filesystem::path& path, const SearchOutcome& outcome);

}  // namespace surfgest::search
