#include "surfgest/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <limits>
#include <sstream>

#include "surfgest/error.hpp"

namespace surfgest::config {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string num(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

}  // namespace

Document Document::parse(std::string_view text, std::string source) {
  Document doc;
  doc.source_ = std::move(source);
  std::string section;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto where = doc.source_ + ":" + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "unterminated section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (section.empty()) throw ConfigError(where + "empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    if (key.empty()) throw ConfigError(where + "missing key before '='");
    for (const auto& it : doc.items_) {
      if (it.section == section && it.key == key) {
        throw ConfigError(where + "duplicate key '" + key + "' (first set on line " + std::to_string(it.line) + ")");
      }
    }
    doc.items_.push_back({section, key, std::string(trim(line.substr(eq + 1))), line_no});
  }
  doc.used_.assign(doc.items_.size(), false);
  return doc;
}

Document Document::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

const Document::Item* Document::find(const std::string& section, const std::string& key) {
  for (std::size_t i = 0; i < items_.size(); ++i) {
    if (items_[i].section == section && items_[i].key == key) {
      used_[i] = true;
      return &items_[i];
    }
  }
  return nullptr;
}

void Document::fail(const std::string& section, const std::string& key, const std::string& message) const {
  for (const auto& it : items_) {
    if (it.section == section && it.key == key) {
      throw ConfigError(source_ + ":" + std::to_string(it.line) + ": " + message);
    }
  }
  throw ConfigError(source_ + ": " + message);
}

bool Document::get(const std::string& section, const std::string& key, std::string& out) {
  const auto* it = find(section, key);
  if (!it) return false;
  out = it->value;
  return true;
}

bool Document::get(const std::string& section, const std::string& key, double& out) {
  const auto* it = find(section, key);
  if (!it) return false;
  const auto& v = it->value;
  double x = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size()) fail(section, key, "'" + key + "' expects a number, got '" + v + "'");
  out = x;
  return true;
}

bool Document::get(const std::string& section, const std::string& key, std::uint64_t& out) {
  const auto* it = find(section, key);
  if (!it) return false;
  const auto& v = it->value;
  std::uint64_t x = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) {
    fail(section, key, "'" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  out = x;
  return true;
}

bool Document::get(const std::string& section, const std::string& key, int& out) {
  const auto* it = find(section, key);
  if (!it) return false;
  const auto& v = it->value;
  int x = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) {
    fail(section, key, "'" + key + "' expects an integer, got '" + v + "'");
  }
  out = x;
  return true;
}

bool Document::get(const std::string& section, const std::string& key, bool& out) {
  const auto* it = find(section, key);
  if (!it) return false;
  const auto& v = it->value;
  if (v == "true" || v == "on" || v == "yes" || v == "1") {
    out = true;
  } else if (v == "false" || v == "off" || v == "no" || v == "0") {
    out = false;
  } else {
    fail(section, key, "'" + key + "' expects true or false, got '" + v + "'");
  }
  return true;
}

bool Document::get_list(const std::string& section, const std::string& key, std::vector<std::string>& out) {
  const auto* it = find(section, key);
  if (!it) return false;
  std::istringstream ss(it->value);
  out.clear();
  for (std::string tok; ss >> tok;) out.push_back(tok);
  if (out.empty()) fail(section, key, "'" + key + "' needs at least one value");
  return true;
}

void Document::reject_unknown() const {
  for (std::size_t i = 0; i < items_.size(); ++i) {
    if (used_[i]) continue;
    const auto& it = items_[i];
    const std::string name = it.section.empty() ? it.key : it.section + "." + it.key;
    throw ConfigError(source_ + ":" + std::to_string(it.line) + ": unknown key '" + name + "'");
  }
}

namespace {

template <typename T, typename Parse>
void get_parsed(Document& doc, const std::string& section, const std::string& key, T& out, Parse parse) {
  std::string raw;
  if (!doc.get(section, key, raw)) return;
  try {
    out = parse(raw);
  } catch (const ConfigError& e) {
    doc.fail(section, key, "'" + key + "': " + e.what());
  }
}

template <typename T, typename Parse>
void get_list_parsed(Document& doc, const std::string& section, const std::string& key, std::vector<T>& out,
                     Parse parse) {
  std::vector<std::string> raw;
  if (!doc.get_list(section, key, raw)) return;
  std::vector<T> values;
  for (const auto& r : raw) {
    try {
      values.push_back(parse(r));
    } catch (const ConfigError& e) {
      doc.fail(section, key, "'" + key + "': " + e.what());
    }
  }
  out = std::move(values);
}

double to_double(const std::string& s) {
  double x = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError("'" + s + "' is not a number");
  return x;
}

std::size_t to_size(const std::string& s) {
  std::uint64_t x = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty()) throw ConfigError("'" + s + "' is not a count");
  return static_cast<std::size_t>(x);
}

std::pair<std::size_t, std::size_t> to_blocks_width(const std::string& s) {
  const auto x = s.find('x');
  if (x == std::string::npos) throw ConfigError("'" + s + "' is not BLOCKSxWIDTH");
  return {to_size(s.substr(0, x)), to_size(s.substr(x + 1))};
}

search::Band required_band(const std::string& s) {
  auto b = search::parse_band(s);
  if (!b) throw ConfigError("band must be LOW-HIGH here, not 'none'");
  return *b;
}

void read_search_keys(Document& doc, const std::string& sec, search::SearchSpace& space) {
  get_list_parsed(doc, sec, "bandpass", space.bandpass, search::parse_band);
  get_list_parsed(doc, sec, "downsample", space.downsample, [](const std::string& s) { return static_cast<int>(to_size(s)); });
  get_list_parsed(doc, sec, "window_ms", space.window_ms, to_double);
  get_list_parsed(doc, sec, "kernel", space.kernel, to_size);
  get_list_parsed(doc, sec, "blocks_width", space.blocks_width, to_blocks_width);
  get_list_parsed(doc, sec, "dropout", space.dropout, to_double);
}

void validate_or_fail(const Document& doc, const std::string& section, auto&& check) {
  try {
    check();
  } catch (const ConfigError& e) {
    throw ConfigError(doc.source() + ": [" + section + "] " + e.what());
  } catch (const InvalidSpecError& e) {
    throw ConfigError(doc.source() + ": [" + section + "] " + e.what());
  }
}

}  // namespace

void PipelineConfig::validate() const {
  synth.synth.validate();
  if (synth.participants < 1 || synth.sessions < 1) throw ConfigError("synth: participants and sessions must be >= 1");
  detector.validate();
  preprocess.validate(synth.synth.sample_rate_hz);
  train.validate();
  if (split.gestures != 4 && split.gestures != 6) throw ConfigError("split: gestures must be 4 or 6");
  search.space.validate();
  model::SepCnnConfig m = model;
  m.num_classes = split.gestures;
  m.input_length = preprocess.output_length(synth.synth.sample_rate_hz);
  m.validate();
}

PipelineConfig parse_pipeline(std::string_view text, std::string source) {
  auto doc = Document::parse(text, std::move(source));
  PipelineConfig c;

  doc.get("run", "seed", c.seed);
  doc.get("run", "jobs", c.jobs);

  auto& sy = c.synth;
  doc.get("synth", "participants", sy.participants);
  doc.get("synth", "sessions", sy.sessions);
  doc.get("synth", "sample_rate_hz", sy.synth.sample_rate_hz);
  doc.get("synth", "reps_per_class", sy.synth.reps_per_class);
  doc.get("synth", "snr_db", sy.synth.snr_db);
  doc.get("synth", "noise_rms_v", sy.synth.noise_rms_v);
  doc.get("synth", "gap_mean_sec", sy.synth.gap_mean_sec);
  doc.get("synth", "gap_jitter_sec", sy.synth.gap_jitter_sec);
  doc.get("synth", "burst_low_hz", sy.synth.burst_low_hz);
  doc.get("synth", "burst_high_hz", sy.synth.burst_high_hz);
  doc.get("synth", "lag_min_ms", sy.synth.lag_min_ms);
  doc.get("synth", "lag_max_ms", sy.synth.lag_max_ms);

  auto& d = c.detector;
  get_parsed(doc, "detector", "band", d.band, [](const std::string& s) {
    const auto b = required_band(s);
    return dsp::FilterSpec{b.low_hz, b.high_hz, 1000.0};
  });
  doc.get("detector", "high_gain", d.high_gain);
  doc.get("detector", "low_gain", d.low_gain);
  doc.get("detector", "occupancy", d.occupancy_frac);
  doc.get("detector", "window_ms", d.det_window_ms);
  doc.get("detector", "hop_ms", d.hop_ms);
  doc.get("detector", "lockout_ms", d.lockout_ms);
  doc.get("detector", "require_rearm", d.require_rearm);

  auto& p = c.preprocess;
  get_parsed(doc, "preprocess", "filter", p.filter, parse_placement);
  std::string band;
  if (doc.get("preprocess", "band", band)) {
    try {
      const auto b = required_band(band);
      p.low_cut_hz = b.low_hz;
      p.high_cut_hz = b.high_hz;
    } catch (const ConfigError& e) {
      doc.fail("preprocess", "band", "'band': " + std::string(e.what()));
    }
  }
  doc.get("preprocess", "window_ms", p.window_ms);
  doc.get("preprocess", "pre_onset_frac", p.pre_onset_frac);
  doc.get("preprocess", "normalize", p.normalize);
  doc.get("preprocess", "downsample", p.downsample);
  doc.get("preprocess", "anti_alias", p.anti_alias);

  auto& m = c.model;
  doc.get("model", "kernel", m.kernel_size);
  doc.get("model", "blocks", m.num_blocks);
  doc.get("model", "width", m.block_width);
  doc.get("model", "dropout", m.dropout_p);
  doc.get("model", "pool_out", m.pool_out);
  doc.get("model", "hidden", m.classifier_hidden);

  auto& t = c.train;
  doc.get("train", "epochs", t.epochs);
  doc.get("train", "batch_size", t.batch_size);
  doc.get("train", "learning_rate", t.learning_rate);
  doc.get("train", "weight_decay", t.weight_decay);
  doc.get("train", "beta1", t.beta1);
  doc.get("train", "beta2", t.beta2);
  doc.get("train", "eps", t.eps);

  auto& s = c.split;
  get_parsed(doc, "split", "method", s.method, [](const std::string& v) {
    const auto m = parse_split(v);
    if (!m || *m == SplitMethod::kPooledSessions) throw ConfigError("unknown split method '" + v + "' (expected PS, LOSO or AOS)");
    return *m;
  });
  doc.get("split", "folds", s.params.folds);
  doc.get("split", "test_sessions", s.params.test_sessions);
  doc.get("split", "gestures", s.gestures);

  read_search_keys(doc, "search", c.search.space);
  doc.get("search", "budget", c.search.budget);
  doc.get("search", "folds", c.search.split.folds);
  doc.get("search", "test_sessions", c.search.split.test_sessions);

  doc.reject_unknown();

  c.synth.synth.seed = c.seed;
  c.train.seed = c.seed;
  validate_or_fail(doc, "synth", [&] {
    c.synth.synth.validate();
    if (sy.participants < 1 || sy.sessions < 1) throw ConfigError("participants and sessions must be >= 1");
  });
  validate_or_fail(doc, "detector", [&] { c.detector.validate(); });
  validate_or_fail(doc, "preprocess", [&] { c.preprocess.validate(c.synth.synth.sample_rate_hz); });
  validate_or_fail(doc, "train", [&] { c.train.validate(); });
  validate_or_fail(doc, "search", [&] { c.search.space.validate(); });
  validate_or_fail(doc, "model", [&] { c.validate(); });
  return c;
}

PipelineConfig load_pipeline(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_pipeline(ss.str(), path.string());
}

std::string to_text(const PipelineConfig& c) {
  std::ostringstream o;
  const auto b = [](bool v) { return v ? "true" : "false"; };
  const auto& sy = c.synth.synth;
  o << "[run]\nseed = " << c.seed << "\njobs = " << c.jobs << "\n\n";
  o << "[synth]\nparticipants = " << c.synth.participants << "\nsessions = " << c.synth.sessions
    << "\nsample_rate_hz = " << num(sy.sample_rate_hz) << "\nreps_per_class = " << sy.reps_per_class
    << "\nsnr_db = " << num(sy.snr_db) << "\nnoise_rms_v = " << num(sy.noise_rms_v)
    << "\ngap_mean_sec = " << num(sy.gap_mean_sec) << "\ngap_jitter_sec = " << num(sy.gap_jitter_sec)
    << "\nburst_low_hz = " << num(sy.burst_low_hz) << "\nburst_high_hz = " << num(sy.burst_high_hz)
    << "\nlag_min_ms = " << num(sy.lag_min_ms) << "\nlag_max_ms = " << num(sy.lag_max_ms) << "\n\n";
  const auto& d = c.detector;
  o << "[detector]\nband = " << num(d.band.low_cut_hz) << "-" << num(d.band.high_cut_hz)
    << "\nhigh_gain = " << num(d.high_gain) << "\nlow_gain = " << num(d.low_gain)
    << "\noccupancy = " << num(d.occupancy_frac) << "\nwindow_ms = " << num(d.det_window_ms)
    << "\nhop_ms = " << num(d.hop_ms) << "\nlockout_ms = " << num(d.lockout_ms)
    << "\nrequire_rearm = " << b(d.require_rearm) << "\n\n";
  const auto& p = c.preprocess;
  o << "[preprocess]\nfilter = " << placement_name(p.filter) << "\nband = " << num(p.low_cut_hz) << "-"
    << num(p.high_cut_hz) << "\nwindow_ms = " << num(p.window_ms) << "\npre_onset_frac = " << num(p.pre_onset_frac)
    << "\nnormalize = " << b(p.normalize) << "\ndownsample = " << p.downsample
    << "\nanti_alias = " << b(p.anti_alias) << "\n\n";
  const auto& m = c.model;
  o << "[model]\nkernel = " << m.kernel_size << "\nblocks = " << m.num_blocks << "\nwidth = " << m.block_width
    << "\ndropout = " << num(m.dropout_p) << "\npool_out = " << m.pool_out << "\nhidden = " << m.classifier_hidden
    << "\n\n";
  const auto& t = c.train;
  o << "[train]\nepochs = " << t.epochs << "\nbatch_size = " << t.batch_size
    << "\nlearning_rate = " << num(t.learning_rate) << "\nweight_decay = " << num(t.weight_decay)
    << "\nbeta1 = " << num(t.beta1) << "\nbeta2 = " << num(t.beta2) << "\neps = " << num(t.eps) << "\n\n";
  o << "[split]\nmethod = " << split_name(c.split.method) << "\nfolds = " << c.split.params.folds
    << "\ntest_sessions = " << c.split.params.test_sessions << "\ngestures = " << c.split.gestures << "\n\n";
  const auto& sp = c.search.space;
  o << "[search]\nbandpass =";
  for (const auto& x : sp.bandpass) o << ' ' << search::band_label(x);
  o << "\ndownsample =";
  for (int x : sp.downsample) o << ' ' << x;
  o << "\nwindow_ms =";
  for (double x : sp.window_ms) o << ' ' << num(x);
  o << "\nkernel =";
  for (auto x : sp.kernel) o << ' ' << x;
  o << "\nblocks_width =";
  for (auto [bl, w] : sp.blocks_width) o << ' ' << bl << 'x' << w;
  o << "\ndropout =";
  for (double x : sp.dropout) o << ' ' << num(x);
  o << "\nbudget = " << c.search.budget << "\nfolds = " << c.search.split.folds
    << "\ntest_sessions = " << c.search.split.test_sessions << "\n";
  return o.str();
}

search::SearchSpace parse_search_space(std::string_view text, std::string source) {
  auto doc = Document::parse(text, std::move(source));
  search::SearchSpace space;
  read_search_keys(doc, "", space);
  read_search_keys(doc, "search", space);
  doc.reject_unknown();
  validate_or_fail(doc, "search", [&] { space.validate(); });
  return space;
}

search::SearchSpace load_search_space(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read search space " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_search_space(ss.str(), path.string());
}

}  // namespace surfgest::config
