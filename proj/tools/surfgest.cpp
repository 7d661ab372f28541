// surfgest: batch front end over a run directory.
//
//   surfgest synth    --out RUN [--config FILE] [--seed N] [--participants P] [--sessions S]
//   surfgest annotate --out RUN [--corrections DIR]
//   surfgest window   --out RUN
//   surfgest train    --out RUN [--split PS|LOSO|AOS] [--gestures 4|6] [--jobs N]
//   surfgest eval     --out RUN --checkpoint FILE [--split ...] [--fold K]
//   surfgest search   --out RUN [--space FILE] [--budget N] [--jobs N]
//   surfgest report   --out RUN [--plot ID] [--seconds T]
//
// Exit status: 0 when every requested fold or config completed, 1 on an
// incomplete run or runtime failure, 2 on a configuration error.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "run_dir.hpp"
#include "surfgest/annotation.hpp"
#include "surfgest/config.hpp"
#include "surfgest/dataset.hpp"
#include "surfgest/detect.hpp"
#include "surfgest/dsp.hpp"
#include "surfgest/error.hpp"
#include "surfgest/model.hpp"
#include "surfgest/pipeline.hpp"
#include "surfgest/search.hpp"
#include "surfgest/synth.hpp"
#include "surfgest/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace surfgest;
using cli::RunDir;

namespace {

constexpr double kLabelToleranceSec = 0.05;

struct Common {
  std::string config;
  std::string out = "run";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
};

struct Options {
  Common common;
  std::optional<int> participants;
  std::optional<int> sessions;
  std::string corrections;
  std::string split;
  std::optional<std::size_t> gestures;
  std::string checkpoint;
  std::optional<std::size_t> fold;
  std::string space;
  std::optional<std::size_t> budget;
  std::string plot;
  double plot_seconds = 5.0;
};

void info(const std::string& msg) { std::cerr << "surfgest: " << msg << "\n"; }

// Resolves the run config with the flags that change results applied.
config::PipelineConfig resolve(RunDir& run, const Options& o) {
  auto cfg = run.resolve_config(o.common.config, [&](config::PipelineConfig& c) {
    if (o.common.seed) {
      c.seed = *o.common.seed;
      c.synth.synth.seed = c.seed;
      c.train.seed = c.seed;
    }
    if (o.participants) c.synth.participants = *o.participants;
    if (o.sessions) c.synth.sessions = *o.sessions;
  });
  if (o.common.jobs) cfg.jobs = *o.common.jobs;
  if (cfg.jobs == 0) throw ConfigError("--jobs must be >= 1");
  return cfg;
}

fs::path index_path(const RunDir& run) { return run / "corpus/index.json"; }

DatasetIndex require_index(const RunDir& run) {
  const auto p = index_path(run);
  if (!fs::exists(p)) throw ConfigError(p.string() + " not found; run 'surfgest synth' first");
  return load_index(p);
}

SplitMethod split_of(const Options& o, const config::PipelineConfig& cfg) {
  if (o.split.empty()) return cfg.split.method;
  const auto m = parse_split(o.split);
  if (!m || *m == SplitMethod::kPooledSessions) throw ConfigError("--split must be PS, LOSO or AOS");
  return *m;
}

std::size_t gestures_of(const Options& o, const config::PipelineConfig& cfg) {
  const auto g = o.gestures.value_or(cfg.split.gestures);
  if (g != 4 && g != 6) throw ConfigError("--gestures must be 4 or 6");
  return g;
}

std::vector<SessionKey> unique_keys(const WindowSet& w) {
  std::vector<SessionKey> k(w.keys);
  std::sort(k.begin(), k.end());
  k.erase(std::unique(k.begin(), k.end()), k.end());
  return k;
}

void write_json(const fs::path& p, const json& j) { cli::write_atomic(p, j.dump(2) + "\n"); }

// ---------------------------------------------------------------------------

int cmd_synth(const Options& o) {
  RunDir run(o.common.out);
  const auto cfg = resolve(run, o);
  if (run.step_done("synth")) {
    info("synth: corpus already present, skipping");
    return 0;
  }
  const auto dir = run / "corpus";
  fs::remove_all(dir);
  const auto index = synth::generate_corpus(cfg.synth.synth, cfg.synth.participants, cfg.synth.sessions, dir);
  run.record_step("synth", {{"recordings", index.entries.size()},
                            {"events", index.entries.size() * cfg.synth.synth.events_per_session()}});
  info("synth: " + std::to_string(index.entries.size()) + " recordings in " + dir.string());
  return 0;
}

int cmd_annotate(const Options& o) {
  RunDir run(o.common.out);
  const auto cfg = resolve(run, o);
  auto index = require_index(run);
  const std::string step = o.corrections.empty() ? "annotate" : "annotate+" + fs::path(o.corrections).filename().string();
  if (run.step_done(step)) {
    info(step + ": already done, skipping");
    return 0;
  }
  std::vector<detect::CorpusFile> files;
  for (const auto& e : index.entries) files.push_back({e.id, index.resolve(e.recording)});
  const auto report = detect::annotate_corpus(files, cfg.detector, cfg.synth.synth.events_per_session());

  json per_file = json::array();
  std::size_t corrected = 0;
  fs::create_directories(index.root / "annotations");
  for (std::size_t i = 0; i < files.size(); ++i) {
    auto& e = index.entries[i];
    auto ann = report.annotations[i];
    if (!o.corrections.empty()) {
      const auto cpath = fs::path(o.corrections) / (e.id + ".json");
      if (fs::exists(cpath)) {
        ann = apply_corrections(ann, load_corrections(cpath), cfg.detector.lockout_ms / 1000.0);
        ++corrected;
      }
    }
    if (e.truth) ann = assign_labels(ann, load_annotation(index.resolve(*e.truth)), kLabelToleranceSec);
    std::size_t unlabeled = 0;
    for (const auto& ev : ann.events) unlabeled += ev.label ? 0 : 1;
    const fs::path rel = fs::path("annotations") / (e.id + ".json");
    save_annotation(index.root / rel, ann);
    e.annotation = rel;
    per_file.push_back({{"recording_id", e.id},
                        {"detected", report.files[i].detected},
                        {"needs_review", report.files[i].needs_review},
                        {"unlabeled", unlabeled}});
  }
  save_index(index_path(run), index);
  const json summary{{"files", files.size()},
                     {"automated", report.automated_count()},
                     {"automation_rate", report.automation_rate()},
                     {"corrected", corrected},
                     {"per_file", per_file}};
  write_json(run / "corpus/annotation_report.json", summary);
  run.record_step(step, {{"automation_rate", report.automation_rate()}, {"corrected", corrected}});
  char buf[128];
  std::snprintf(buf, sizeof buf, "annotate: %zu/%zu files need no review (%.1f%%)", report.automated_count(),
                files.size(), 100.0 * report.automation_rate());
  info(buf);
  return 0;
}

WindowSet ensure_windows(RunDir& run, const config::PipelineConfig& cfg) {
  const auto path = run / "windows/windows.bin";
  // A later annotate pass rewrites the index and invalidates the store.
  if (run.step_done("window") && fs::exists(path) &&
      fs::last_write_time(path) >= fs::last_write_time(index_path(run))) {
    return load_windows(path);
  }
  const auto index = require_index(run);
  const auto sessions = load_sessions(index, LabelSource::kPreferAnnotation);
  auto built = build_windows(sessions, cfg.preprocess);
  for (const auto& w : built.warnings) info("window: " + w);
  fs::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  store_windows(tmp, built.windows);
  fs::rename(tmp, path);
  run.record_step("window", {{"windows", built.windows.size()}, {"dropped", built.warnings.size()}});
  info("window: " + std::to_string(built.windows.size()) + " windows");
  return std::move(built.windows);
}

int cmd_window(const Options& o) {
  RunDir run(o.common.out);
  const auto cfg = resolve(run, o);
  if (run.step_done("window")) info("window: store already present, skipping");
  ensure_windows(run, cfg);
  return 0;
}

int cmd_train(const Options& o) {
  RunDir run(o.common.out);
  const auto cfg = resolve(run, o);
  const auto method = split_of(o, cfg);
  const auto gestures = gestures_of(o, cfg);
  const std::string name = std::string(split_name(method)) + "_g" + std::to_string(gestures);
  const auto final_dir = run / ("train/" + name);
  if (run.step_done("train/" + name) && fs::exists(final_dir / "metrics.json")) {
    info("train " + name + ": already complete, skipping");
    return 0;
  }
  auto windows = ensure_windows(run, cfg);
  if (gestures < kNumGestureClasses) windows = windows.restrict_classes(gestures);
  auto mcfg = model_for(cfg.model, windows);
  mcfg.num_classes = gestures;
  const auto plan = make_splits(unique_keys(windows), method, cfg.split.params);

  auto staging = final_dir;
  staging += ".partial";
  fs::remove_all(staging);
  fs::create_directories(staging);
  info("train " + name + ": " + std::to_string(plan.folds.size()) + " folds, " +
       std::to_string(model::count_parameters(mcfg)) + " parameters");
  const auto summary = train::cross_validate(mcfg, windows, plan, cfg.train, cfg.jobs,
                                             [&](std::size_t k, const train::FoldResult& r) {
                                               model::save_checkpoint(staging / ("fold_" + std::to_string(k) + ".sepw"),
                                                                      r.model);
                                               char buf[96];
                                               std::snprintf(buf, sizeof buf, "train %s: fold %zu accuracy %.4f",
                                                             name.c_str(), k, r.metrics.accuracy);
                                               info(buf);
                                             });
  write_json(staging / "plan.json", json::parse(split_plan_json(plan)));
  train::write_metrics_report(staging / "metrics.json", std::string(split_name(method)), mcfg, cfg.train, summary);
  train::write_confusion_csv(staging / "confusion.csv", summary);
  fs::remove_all(final_dir);
  fs::rename(staging, final_dir);
  run.record_step("train/" + name, {{"folds", plan.folds.size()},
                                    {"accuracy_mean", summary.mean_accuracy},
                                    {"accuracy_std", summary.std_accuracy}});
  char buf[128];
  std::snprintf(buf, sizeof buf, "train %s: accuracy %.4f +/- %.4f", name.c_str(), summary.mean_accuracy,
                summary.std_accuracy);
  info(buf);
  return 0;
}

json metrics_json(const train::FoldMetrics& m) {
  return {{"accuracy", m.accuracy},       {"macro_precision", m.macro_precision}, {"class_precision", m.class_precision},
          {"confusion", m.confusion},     {"param_count", m.param_count},         {"test_count", m.test_count}};
}

int cmd_eval(const Options& o) {
  RunDir run(o.common.out);
  const auto cfg = resolve(run, o);
  if (o.checkpoint.empty()) throw ConfigError("eval: --checkpoint is required");
  const auto net = model::load_checkpoint(o.checkpoint);
  const auto method = split_of(o, cfg);
  auto windows = ensure_windows(run, cfg);
  const auto classes = net.config().num_classes;
  if (classes < kNumGestureClasses) windows = windows.restrict_classes(classes);
  const auto plan = make_splits(unique_keys(windows), method, cfg.split.params);

  std::vector<std::size_t> folds;
  if (o.fold) {
    if (*o.fold >= plan.folds.size()) {
      throw ConfigError("eval: --fold " + std::to_string(*o.fold) + " out of range (plan has " +
                        std::to_string(plan.folds.size()) + " folds)");
    }
    folds.push_back(*o.fold);
  } else {
    for (std::size_t k = 0; k < plan.folds.size(); ++k) folds.push_back(k);
  }
  json out{{"checkpoint", fs::absolute(o.checkpoint).string()}, {"split", split_name(method)}, {"folds", json::array()}};
  for (auto k : folds) {
    const auto test = windows.subset(windows.select(plan.folds[k].test));
    auto m = metrics_json(train::evaluate(net, test));
    m["fold"] = k;
    out["folds"].push_back(std::move(m));
    char buf[96];
    std::snprintf(buf, sizeof buf, "eval: fold %zu accuracy %.4f", k, out["folds"].back()["accuracy"].get<double>());
    info(buf);
  }
  std::string stem = fs::path(o.checkpoint).stem().string() + "_" + std::string(split_name(method));
  if (o.fold) stem += "_fold" + std::to_string(*o.fold);
  write_json(run / ("eval/" + stem + ".json"), out);
  return 0;
}

int cmd_search(const Options& o) {
  RunDir run(o.common.out);
  const auto cfg = resolve(run, o);
  const auto index = require_index(run);
  const auto sessions = load_sessions(index, LabelSource::kPreferAnnotation);
  const auto space = o.space.empty() ? cfg.search.space : config::load_search_space(o.space);
  const auto gestures = gestures_of(o, cfg);

  search::SearchOptions opt;
  opt.base_preprocess = cfg.preprocess;
  opt.base_model = cfg.model;
  opt.base_model.num_classes = gestures;
  opt.train = cfg.train;
  opt.split = cfg.search.split;
  opt.num_classes = gestures;
  opt.budget = o.budget.value_or(cfg.search.budget);
  opt.seed = cfg.seed;
  opt.jobs = cfg.jobs;
  const auto dir = run / "search";
  fs::create_directories(dir);
  opt.journal = dir / "journal.jsonl";

  const auto outcome = search::run_search(space, sessions, opt);
  search::write_leaderboard_csv(dir / "leaderboard.csv", outcome.leaderboard);
  search::write_leaderboard_json(dir / "leaderboard.json", outcome);
  char buf[192];
  std::snprintf(buf, sizeof buf, "search: %zu selected, %zu evaluated, %zu resumed, %zu skipped", outcome.selected,
                outcome.evaluated, outcome.resumed, outcome.skipped);
  info(buf);
  if (!outcome.leaderboard.empty() && !outcome.leaderboard.front().skipped) {
    const auto& best = outcome.leaderboard.front();
    std::snprintf(buf, sizeof buf, "search: best %s accuracy %.4f (%zu parameters)", best.config.key().c_str(),
                  best.mean_accuracy, best.param_count);
    info(buf);
  }
  if (!outcome.complete) {
    info("search: incomplete; rerun to resume from the journal");
    return 1;
  }
  run.record_step("search", {{"selected", outcome.selected}, {"skipped", outcome.skipped}});
  return 0;
}

// Raw and band-passed first channel of one recording as an SVG.
void write_signal_plot(const fs::path& path, const Recording& rec, const config::PipelineConfig& cfg, double seconds) {
  const auto cascade = dsp::design_bandpass(
      dsp::FilterSpec{cfg.preprocess.low_cut_hz, cfg.preprocess.high_cut_hz, rec.sample_rate_hz});
  const auto filtered = dsp::filter_block(cascade, rec.samples);
  const auto n = std::min<std::size_t>(rec.samples.length, static_cast<std::size_t>(seconds * rec.sample_rate_hz));
  if (n < 2) throw ConfigError("report: plot span is shorter than two samples");
  const double width = 1000.0, lane = 180.0, pad = 20.0;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width + 2 * pad << "\" height=\""
      << 2 * lane + 3 * pad << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  auto trace = [&](const SampleBlock& b, double top, const char* colour, const char* label) {
    float peak = 0.0f;
    for (std::size_t t = 0; t < n; ++t) peak = std::max(peak, std::abs(b.at(0, t)));
    if (peak == 0.0f) peak = 1.0f;
    svg << "<text x=\"" << pad << "\" y=\"" << top - 4 << "\" font-size=\"12\">" << label << "</text>\n";
    svg << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"0.6\" points=\"";
    for (std::size_t t = 0; t < n; ++t) {
      const double x = pad + width * static_cast<double>(t) / static_cast<double>(n - 1);
      const double y = top + lane / 2.0 - (lane / 2.0) * b.at(0, t) / peak;
      svg << x << ',' << y << ' ';
    }
    svg << "\"/>\n";
  };
  trace(rec.samples, pad + 12, "#555555", "raw, channel 0");
  trace(filtered, 2 * pad + lane + 12, "#1f5fbf", "band-passed, channel 0");
  svg << "</svg>\n";
  cli::write_atomic(path, svg.str());
}

int cmd_report(const Options& o) {
  RunDir run(o.common.out);
  const auto cfg = resolve(run, o);
  struct Row {
    std::string split;
    std::size_t gestures;
    json metrics;
  };
  std::vector<Row> rows;
  const auto train_dir = run / "train";
  if (fs::exists(train_dir)) {
    for (const auto& entry : fs::directory_iterator(train_dir)) {
      const auto mpath = entry.path() / "metrics.json";
      if (!entry.is_directory() || !fs::exists(mpath)) continue;
      std::ifstream in(mpath);
      json m = json::parse(in);
      const auto name = entry.path().filename().string();
      const auto g = name.rfind("_g");
      rows.push_back({m.at("split").get<std::string>(),
                      g == std::string::npos ? kNumGestureClasses : std::stoul(name.substr(g + 2)), std::move(m)});
    }
  }
  const std::map<std::string, int> order{{"PS", 0}, {"LOSO", 1}, {"AOS", 2}};
  std::sort(rows.begin(), rows.end(), [&](const Row& a, const Row& b) {
    const auto ra = order.count(a.split) ? order.at(a.split) : 3, rb = order.count(b.split) ? order.at(b.split) : 3;
    return std::tie(b.gestures, ra) < std::tie(a.gestures, rb);
  });

  std::ostringstream txt, csv;
  txt << "split  gestures  folds  accuracy          precision\n";
  csv << "split,gestures,folds,accuracy_mean,accuracy_std,precision_mean,precision_std\n";
  for (const auto& r : rows) {
    const auto& a = r.metrics.at("accuracy");
    const auto& p = r.metrics.at("precision");
    const auto folds = r.metrics.at("folds").size();
    char line[160];
    std::snprintf(line, sizeof line, "%-5s  %8zu  %5zu  %.4f +/- %.4f  %.4f +/- %.4f\n", r.split.c_str(), r.gestures,
                  folds, a.at("mean").get<double>(), a.at("std").get<double>(), p.at("mean").get<double>(),
                  p.at("std").get<double>());
    txt << line;
    std::snprintf(line, sizeof line, "%s,%zu,%zu,%.6f,%.6f,%.6f,%.6f\n", r.split.c_str(), r.gestures, folds,
                  a.at("mean").get<double>(), a.at("std").get<double>(), p.at("mean").get<double>(),
                  p.at("std").get<double>());
    csv << line;
  }
  cli::write_atomic(run / "report/table.txt", txt.str());
  cli::write_atomic(run / "report/table.csv", csv.str());
  std::cout << txt.str();

  if (!o.plot.empty()) {
    const auto index = require_index(run);
    const auto it = std::find_if(index.entries.begin(), index.entries.end(),
                                 [&](const IndexEntry& e) { return e.id == o.plot; });
    if (it == index.entries.end()) throw ConfigError("report: no recording '" + o.plot + "' in the corpus");
    const auto out = run / ("report/" + o.plot + ".svg");
    write_signal_plot(out, load_recording(index.resolve(it->recording)), cfg, o.plot_seconds);
    info("report: wrote " + out.string());
  }
  if (rows.empty()) info("report: no completed training runs");
  return 0;
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "Pipeline config file (recorded in the run directory)");
  sub->add_option("--out", c.out, "Run directory")->capture_default_str();
  sub->add_option("--seed", c.seed, "Run seed (synth and training)");
  sub->add_option("--jobs", c.jobs, "Worker threads");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"surfgest: surface-vibration gesture pipeline"};
  app.require_subcommand(1);
  Options o;
  const std::vector<std::string> splits{"PS", "LOSO", "AOS"};

  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  add_common(synth, o.common);
  synth->add_option("--participants", o.participants);
  synth->add_option("--sessions", o.sessions);

  auto* annotate = app.add_subcommand("annotate", "Detect events and write annotation manifests");
  add_common(annotate, o.common);
  annotate->add_option("--corrections", o.corrections, "Directory of <recording>.json correction manifests");

  auto* window = app.add_subcommand("window", "Build the model-ready window store");
  add_common(window, o.common);

  auto* trn = app.add_subcommand("train", "Cross-validated training");
  add_common(trn, o.common);
  trn->add_option("--split", o.split)->check(CLI::IsMember(splits));
  trn->add_option("--gestures", o.gestures)->check(CLI::IsMember({4, 6}));

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint against a split");
  add_common(eval, o.common);
  eval->add_option("--checkpoint", o.checkpoint)->required();
  eval->add_option("--split", o.split)->check(CLI::IsMember(splits));
  eval->add_option("--fold", o.fold);

  auto* srch = app.add_subcommand("search", "Joint pre-processing and model grid search");
  add_common(srch, o.common);
  srch->add_option("--space", o.space, "Search space file");
  srch->add_option("--budget", o.budget, "Evaluate a seeded subset of this many configs");
  srch->add_option("--gestures", o.gestures)->check(CLI::IsMember({4, 6}));

  auto* report = app.add_subcommand("report", "Summary tables and signal plots");
  add_common(report, o.common);
  report->add_option("--plot", o.plot, "Recording id to plot raw vs filtered");
  report->add_option("--seconds", o.plot_seconds, "Plot span")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return cmd_synth(o);
    if (*annotate) return cmd_annotate(o);
    if (*window) return cmd_window(o);
    if (*trn) return cmd_train(o);
    if (*eval) return cmd_eval(o);
    if (*srch) return cmd_search(o);
    if (*report) return cmd_report(o);
  } catch (const ConfigError& e) {
    std::cerr << "surfgest: config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "surfgest: error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
