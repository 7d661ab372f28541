#include "surfgest/search.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "surfgest/error.hpp"

namespace surfgest::search {

using nlohmann::json;

namespace {

std::string fmt_number(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

std::string band_label(const std::optional<Band>& band) {
  if (!band) return "none";
  return fmt_number(band->low_hz) + "-" + fmt_number(band->high_hz);
}

std::optional<Band> parse_band(const std::string& text) {
  if (text == "none") return std::nullopt;
  const auto dash = text.find('-');
  if (dash == std::string::npos || dash == 0) throw ConfigError("band '" + text + "' is not 'none' or LOW-HIGH");
  try {
    std::size_t a = 0, b = 0;
    const std::string lo = text.substr(0, dash), hi = text.substr(dash + 1);
    Band band{std::stod(lo, &a), std::stod(hi, &b)};
    if (a != lo.size() || b != hi.size()) throw std::invalid_argument("trailing");
    if (!(band.low_hz > 0.0 && band.high_hz > band.low_hz)) throw ConfigError("band '" + text + "' needs 0 < LOW < HIGH");
    return band;
  } catch (const std::logic_error&) {
    throw ConfigError("band '" + text + "' is not 'none' or LOW-HIGH");
  }
}

void SearchSpace::validate() const {
  if (bandpass.empty() || downsample.empty() || window_ms.empty() || kernel.empty() || blocks_width.empty() ||
      dropout.empty()) {
    throw ConfigError("search space: every axis needs at least one value");
  }
  for (int f : downsample) {
    if (f < 1) throw ConfigError("search space: downsample factors must be >= 1");
  }
  for (double w : window_ms) {
    if (!(w > 0.0)) throw ConfigError("search space: window_ms values must be > 0");
  }
  for (auto k : kernel) {
    if (k < 1 || k % 2 == 0) throw ConfigError("search space: kernel sizes must be odd");
  }
  for (auto [b, w] : blocks_width) {
    if (b < 1 || w < 1) throw ConfigError("search space: blocks and width must be >= 1");
  }
  for (double p : dropout) {
    if (!(p >= 0.0 && p < 1.0)) throw ConfigError("search space: dropout must be in [0, 1)");
  }
}

std::size_t SearchSpace::size() const {
  return bandpass.size() * downsample.size() * window_ms.size() * kernel.size() * blocks_width.size() *
         dropout.size();
}

std::string SearchConfig::key() const {
  return "band=" + band_label(band) + " ds=" + std::to_string(downsample) + " win=" + fmt_number(window_ms) +
         " k=" + std::to_string(kernel) + " bw=" + std::to_string(blocks) + "x" + std::to_string(width) +
         " p=" + fmt_number(dropout);
}

PreprocessConfig SearchConfig::preprocess(const PreprocessConfig& base) const {
  PreprocessConfig p = base;
  if (band) {
    if (p.filter == FilterPlacement::kNone) p.filter = FilterPlacement::kStream;
    p.low_cut_hz = band->low_hz;
    p.high_cut_hz = band->high_hz;
  } else {
    p.filter = FilterPlacement::kNone;
  }
  p.window_ms = window_ms;
  p.downsample = downsample;
  return p;
}

model::SepCnnConfig SearchConfig::model(const model::SepCnnConfig& base) const {
  model::SepCnnConfig m = base;
  m.kernel_size = kernel;
  m.num_blocks = blocks;
  m.block_width = width;
  m.dropout_p = dropout;
  return m;
}

std::vector<SearchConfig> enumerate_configs(const SearchSpace& space) {
  space.validate();
  std::vector<SearchConfig> out;
  out.reserve(space.size());
  for (const auto& band : space.bandpass)
    for (int ds : space.downsample)
      for (double win : space.window_ms)
        for (auto k : space.kernel)
          for (auto [b, w] : space.blocks_width)
            for (double p : space.dropout) out.push_back({out.size(), band, ds, win, k, b, w, p});
  return out;
}

std::vector<SearchResult> rank_results(std::vector<SearchResult> results) {
  std::stable_sort(results.begin(), results.end(), [](const SearchResult& a, const SearchResult& b) {
    if (a.skipped != b.skipped) return !a.skipped;
    if (a.skipped) return a.config.index < b.config.index;
    if (a.mean_accuracy != b.mean_accuracy) return a.mean_accuracy > b.mean_accuracy;
    if (a.param_count != b.param_count) return a.param_count < b.param_count;
    return a.config.index < b.config.index;
  });
  std::size_t rank = 0;
  for (auto& r : results) r.rank = r.skipped ? 0 : ++rank;
  return results;
}

std::vector<std::size_t> select_budget(std::size_t total, std::size_t budget, std::uint64_t seed) {
  std::vector<std::size_t> idx(total);
  std::iota(idx.begin(), idx.end(), 0);
  if (budget == 0 || budget >= total) return idx;
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(budget);
  std::sort(idx.begin(), idx.end());
  return idx;
}

namespace {

json result_to_json(const SearchResult& r) {
  json j = {{"index", r.config.index}, {"key", r.config.key()}, {"skipped", r.skipped}};
  if (r.skipped) {
    j["reason"] = r.skip_reason;
  } else {
    j["mean_accuracy"] = r.mean_accuracy;
    j["std_accuracy"] = r.std_accuracy;
    j["mean_precision"] = r.mean_precision;
    j["std_precision"] = r.std_precision;
    j["fold_accuracy"] = r.fold_accuracy;
    j["param_count"] = r.param_count;
  }
  return j;
}

SearchResult result_from_json(const json& j, const SearchConfig& cfg) {
  SearchResult r;
  r.config = cfg;
  r.skipped = j.at("skipped").get<bool>();
  if (r.skipped) {
    r.skip_reason = j.at("reason").get<std::string>();
  } else {
    r.mean_accuracy = j.at("mean_accuracy").get<double>();
    r.std_accuracy = j.at("std_accuracy").get<double>();
    r.mean_precision = j.at("mean_precision").get<double>();
    r.std_precision = j.at("std_precision").get<double>();
    r.fold_accuracy = j.at("fold_accuracy").get<std::vector<double>>();
    r.param_count = j.at("param_count").get<std::size_t>();
  }
  return r;
}

// Reads completed records. A malformed final line is an interrupted write and
// is dropped from the file; a malformed line elsewhere is an error.
std::map<std::size_t, SearchResult> read_journal(const std::filesystem::path& path,
                                                 const std::vector<SearchConfig>& configs) {
  std::map<std::size_t, SearchResult> done;
  if (path.empty() || !std::filesystem::exists(path)) return done;
  std::ifstream in(path);
  if (!in) throw IoError("cannot read search journal " + path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  const bool ends_with_newline = [&] {
    std::ifstream raw(path, std::ios::binary | std::ios::ate);
    const auto size = raw.tellg();
    if (size <= 0) return true;
    raw.seekg(-1, std::ios::end);
    return raw.get() == '\n';
  }();

  std::vector<std::string> kept;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    json j;
    try {
      j = json::parse(lines[i]);
      const auto idx = j.at("index").get<std::size_t>();
      if (idx >= configs.size() || j.at("key").get<std::string>() != configs[idx].key()) {
        throw ConfigError(path.string() + ":" + std::to_string(i + 1) +
                          ": journal record does not match the search space");
      }
      done[idx] = result_from_json(j, configs[idx]);
      kept.push_back(lines[i]);
    } catch (const json::exception&) {
      const bool last = i + 1 == lines.size();
      if (!last || ends_with_newline) {
        throw FormatError(path.string() + ":" + std::to_string(i + 1) + ": malformed journal record", i);
      }
    }
  }
  if (kept.size() != lines.size()) {
    auto tmp = path;
    tmp += ".tmp";
    {
      std::ofstream out(tmp, std::ios::trunc);
      for (const auto& l : kept) out << l << '\n';
    }
    std::filesystem::rename(tmp, path);
  }
  return done;
}

std::vector<SessionKey> unique_keys(const std::vector<LoadedSession>& sessions) {
  std::set<SessionKey> keys;
  for (const auto& s : sessions) keys.insert(s.recording.key());
  return {keys.begin(), keys.end()};
}

}  // namespace

SearchOutcome run_search(const SearchSpace& space, const std::vector<LoadedSession>& sessions,
                         const SearchOptions& options) {
  const auto configs = enumerate_configs(space);
  const auto selected = select_budget(configs.size(), options.budget, options.seed);
  const auto plan = make_splits(unique_keys(sessions), SplitMethod::kPooledSessions, options.split);

  SearchOutcome outcome;
  outcome.enumerated = configs.size();
  outcome.selected = selected.size();

  auto done = read_journal(options.journal, configs);
  std::ofstream journal;
  if (!options.journal.empty()) {
    journal.open(options.journal, std::ios::app);
    if (!journal) throw IoError("cannot append to search journal " + options.journal.string());
  }
  std::mutex mutex;
  std::atomic<std::size_t> new_evals{0};
  std::atomic<bool> stopped{false};

  auto record = [&](SearchResult r) {
    std::lock_guard lock(mutex);
    if (journal.is_open()) {
      journal << result_to_json(r).dump() << '\n';
      journal.flush();
    }
    done[r.config.index] = std::move(r);
  };

  // Group selected configs by pre-processing variant; enumeration order keeps
  // each group contiguous.
  std::size_t g = 0;
  while (g < selected.size() && !stopped) {
    const auto& head = configs[selected[g]];
    std::size_t end = g;
    std::vector<std::size_t> pending;
    while (end < selected.size()) {
      const auto& c = configs[selected[end]];
      if (c.band != head.band || c.downsample != head.downsample || c.window_ms != head.window_ms) break;
      if (done.count(c.index)) {
        ++outcome.resumed;
      } else {
        pending.push_back(c.index);
      }
      ++end;
    }
    g = end;
    if (pending.empty()) continue;

    WindowSet windows;
    std::string variant_error;
    try {
      auto build = build_windows(sessions, head.preprocess(options.base_preprocess));
      windows = options.num_classes < kNumGestureClasses ? build.windows.restrict_classes(options.num_classes)
                                                         : std::move(build.windows);
      if (windows.size() == 0) variant_error = "pre-processing produced no windows";
      ++outcome.variants_built;
    } catch (const Error& e) {
      variant_error = std::string("pre-processing: ") + e.what();
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    auto worker = [&] {
      for (std::size_t i = next++; i < pending.size() && !stopped; i = next++) {
        const auto& cfg = configs[pending[i]];
        SearchResult r;
        r.config = cfg;
        if (!variant_error.empty()) {
          r.skipped = true;
          r.skip_reason = variant_error;
          record(std::move(r));
          continue;
        }
        model::SepCnnConfig mcfg = model_for(cfg.model(options.base_model), windows);
        mcfg.num_classes = options.num_classes;
        try {
          mcfg.validate();
        } catch (const Error& e) {
          r.skipped = true;
          r.skip_reason = std::string("model: ") + e.what();
          record(std::move(r));
          continue;
        }
        if (options.max_new_evaluations > 0 && new_evals++ >= options.max_new_evaluations) {
          stopped = true;
          break;
        }
        try {
          train::TrainConfig tcfg = options.train;
          tcfg.seed = train::fold_seed(options.seed, cfg.index);
          const auto cv = train::cross_validate(mcfg, windows, plan, tcfg, 1);
          r.mean_accuracy = cv.mean_accuracy;
          r.std_accuracy = cv.std_accuracy;
          r.mean_precision = cv.mean_precision;
          r.std_precision = cv.std_precision;
          for (const auto& f : cv.folds) r.fold_accuracy.push_back(f.accuracy);
          r.param_count = model::count_parameters(mcfg);
        } catch (const TrainingError& e) {
          r.skipped = true;
          r.skip_reason = std::string("training: ") + e.what();
        } catch (...) {
          std::lock_guard lock(mutex);
          if (!failure) failure = std::current_exception();
          stopped = true;
          break;
        }
        record(std::move(r));
      }
    };
    const std::size_t n_threads = std::max<std::size_t>(1, std::min(options.jobs, pending.size()));
    if (n_threads == 1) {
      worker();
    } else {
      std::vector<std::jthread> pool;
      for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);
  }

  std::vector<SearchResult> results;
  for (auto idx : selected) {
    auto it = done.find(idx);
    if (it == done.end()) continue;
    results.push_back(it->second);
    if (it->second.skipped) {
      ++outcome.skipped;
    } else {
      ++outcome.evaluated;
    }
  }
  outcome.complete = results.size() == selected.size();
  outcome.leaderboard = rank_results(std::move(results));
  return outcome;
}

void write_leaderboard_csv(const std::filesystem::path& path, const std::vector<SearchResult>& board) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "rank,index,bandpass,downsample,window_ms,kernel,blocks,width,dropout,mean_accuracy,std_accuracy,"
         "mean_precision,std_precision,param_count,status,reason\n";
  out.precision(17);
  for (const auto& r : board) {
    const auto& c = r.config;
    out << r.rank << ',' << c.index << ',' << band_label(c.band) << ',' << c.downsample << ',' << c.window_ms << ','
        << c.kernel << ',' << c.blocks << ',' << c.width << ',' << c.dropout << ',';
    if (r.skipped) {
      std::string reason = r.skip_reason;
      std::replace(reason.begin(), reason.end(), '"', '\'');
      out << ",,,,,skipped,\"" << reason << "\"\n";
    } else {
      out << r.mean_accuracy << ',' << r.std_accuracy << ',' << r.mean_precision << ',' << r.std_precision << ','
          << r.param_count << ",ok,\n";
    }
  }
}

void write_leaderboard_json(const std::filesystem::path& path, const SearchOutcome& outcome) {
  json board = json::array();
  for (const auto& r : outcome.leaderboard) {
    json j = result_to_json(r);
    j["rank"] = r.rank;
    j["config"] = {{"bandpass", band_label(r.config.band)}, {"downsample", r.config.downsample},
                   {"window_ms", r.config.window_ms},       {"kernel", r.config.kernel},
                   {"blocks", r.config.blocks},             {"width", r.config.width},
                   {"dropout", r.config.dropout}};
    board.push_back(std::move(j));
  }
  const json doc = {{"enumerated", outcome.enumerated}, {"selected", outcome.selected},
                    {"evaluated", outcome.evaluated},   {"skipped", outcome.skipped},
                    {"complete", outcome.complete},     {"leaderboard", std::move(board)}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << doc.dump(2) << '\n';
}

}  // namespace surfgest::search
