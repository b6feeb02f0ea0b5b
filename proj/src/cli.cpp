// SPDX-License-Identifier: Apache-2.0
#include "vtmot/cli.hpp"

#include "vtmot/error.hpp"
#include "vtmot/pfm/gradcheck.hpp"
#include "vtmot/pfm/params_io.hpp"
#include "vtmot/random.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <thread>

namespace vtmot {

namespace fs = std::filesystem;

std::string_view to_string(Command c) {
  switch (c) {
    case Command::Validate: return "validate";
    case Command::Stats: return "stats";
    case Command::Evaluate: return "evaluate";
    case Command::Track: return "track";
    case Command::PfmDemo: return "pfm-demo";
    case Command::GradCheck: return "gradcheck";
    case Command::Gen: return "gen";
  }
  return "validate";
}

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Values that need post-processing after CLI11 has filled them in.
struct Raw {
  std::string format = "table";
  int protocol = 1;
  std::string platform;
  std::string variant;
  std::optional<int> d, heads, hidden, stem;
  std::string motion = "linear";
  std::string platforms;
  std::optional<std::size_t> videos, frames, boxes;
};

struct Cli {
  CLI::App app{"Visible-thermal multi-object tracking toolkit", "vtmot"};
  std::map<Command, CLI::App*> subs;
};

void add_format(CLI::App* sub, Raw& raw) {
  sub->add_option("--format", raw.format, "Output format")->check(CLI::IsMember({"table", "machine"}));
}

void add_jobs(CLI::App* sub, CliConfig& cfg) {
  sub->add_option("--jobs,-j", cfg.jobs, std::string("Parallel sequences (default $") + kJobsEnv + " or 1)")
      ->check(CLI::PositiveNumber);
}

void add_model(CLI::App* sub, CliConfig& cfg, Raw& raw) {
  std::vector<std::string> names;
  for (pfm::FusionVariant v : {pfm::FusionVariant::Full, pfm::FusionVariant::TffOnly, pfm::FusionVariant::MffUni,
                               pfm::FusionVariant::MffMul, pfm::FusionVariant::MffBoth}) {
    names.emplace_back(pfm::to_string(v));
  }
  sub->add_option("--variant", raw.variant, "Fusion variant")->check(CLI::IsMember(names));
  sub->add_option("--dim", raw.d, "Token width d");
  sub->add_option("--heads", raw.heads, "Attention heads");
  sub->add_option("--hidden", raw.hidden, "FFN hidden width");
  sub->add_option("--stem-channels", raw.stem, "Stem output channels");
  sub->add_option("--seed", cfg.seed, "Random seed");
}

void build(Cli& cli, CliConfig& cfg, Raw& raw) {
  CLI::App& app = cli.app;
  app.require_subcommand(1);
  app.fallthrough(false);

  auto* validate = app.add_subcommand("validate", "Check sequence directories against the dataset format");
  validate->add_option("--dataset", cfg.dataset, "Dataset root or single sequence directory")->required();
  add_jobs(validate, cfg);
  add_format(validate, raw);
  cli.subs[Command::Validate] = validate;

  auto* stats = app.add_subcommand("stats", "Dataset statistics from a dataset or from aggregate counts");
  stats->add_option("--dataset", cfg.dataset, "Dataset root or single sequence directory");
  stats->add_option("--videos", raw.videos, "Number of videos (count mode)");
  stats->add_option("--frames", raw.frames, "Number of frames (count mode)");
  stats->add_option("--boxes", raw.boxes, "Number of boxes (count mode)");
  stats->add_option("--tracks", cfg.n_tracks, "Number of tracks (count mode)");
  stats->add_option("--rate", cfg.frame_rate, "Frame rate in fps (count mode)")->check(CLI::PositiveNumber);
  add_format(stats, raw);
  cli.subs[Command::Stats] = stats;

  auto* evaluate = app.add_subcommand("evaluate", "Score tracker results against ground truth");
  evaluate->add_option("--gt", cfg.dataset, "Ground-truth dataset root")->required();
  evaluate->add_option("--res", cfg.results, "Directory of <sequence>.txt result files")->required();
  evaluate->add_option("--protocol", raw.protocol, "1: all sequences, 2: per platform")->check(CLI::IsMember({1, 2}));
  evaluate->add_option("--platform", raw.platform, "Protocol 2 only: restrict to one platform")
      ->check(CLI::IsMember({"handheld", "surveillance", "uav"}, CLI::ignore_case));
  add_jobs(evaluate, cfg);
  add_format(evaluate, raw);
  cli.subs[Command::Evaluate] = evaluate;

  auto* track = app.add_subcommand("track", "Run the tracker on det/det.txt of every sequence");
  track->add_option("--dataset", cfg.dataset, "Dataset root or single sequence directory")->required();
  track->add_option("--out", cfg.results, "Directory for <sequence>.txt result files")->required();
  track->add_option("--iou-threshold", cfg.tracker.iou_threshold, "Association IoU threshold");
  track->add_option("--max-age", cfg.tracker.max_age, "Frames a lost track survives");
  track->add_option("--min-hits", cfg.tracker.min_hits, "Updates before a track is confirmed");
  track->add_option("--score-birth", cfg.tracker.score_birth, "Minimum score to start a track");
  track->add_option("--nms-threshold", cfg.tracker.nms_threshold, "IoU for merging visible and infrared boxes");
  add_jobs(track, cfg);
  cli.subs[Command::Track] = track;

  auto* demo = app.add_subcommand("pfm-demo", "Run the fusion module on a fixture directory");
  demo->add_option("--fixture", cfg.fixture, "Directory with params.json, images and prev_objects.txt")->required();
  demo->add_option("--out", cfg.output, "Write the stage outputs as a key -> array JSON document");
  demo->add_flag("--init", cfg.init_fixture, "Write a random fixture into --fixture first");
  demo->add_flag("--check", cfg.check_fixture, "Gradient check at the fixture parameters and images");
  add_model(demo, cfg, raw);
  add_format(demo, raw);
  cli.subs[Command::PfmDemo] = demo;

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every backward pass");
  grad->add_flag("--quick", cfg.quick, "Skip the composed forward pass");
  add_model(grad, cfg, raw);
  add_format(grad, raw);
  cli.subs[Command::GradCheck] = grad;

  auto* gen = app.add_subcommand("gen", "Write synthetic sequences");
  gen->add_option("--out", cfg.results, "Dataset root to write into")->required();
  gen->add_option("--results", cfg.oracle_results, "Also write perfect-identity result files here");
  gen->add_option("--sequences", cfg.n_sequences, "Number of sequences")->check(CLI::PositiveNumber);
  gen->add_option("--name", cfg.scenario.name, "Sequence name, suffixed -NNN when several");
  gen->add_option("--tracks", cfg.scenario.n_tracks, "Objects per sequence");
  gen->add_option("--frames", cfg.scenario.n_frames, "Frames per sequence");
  gen->add_option("--motion", raw.motion, "Motion model")
      ->check(CLI::IsMember({"linear", "crossing", "stationary"}));
  gen->add_option("--width", cfg.scenario.width, "Image width");
  gen->add_option("--height", cfg.scenario.height, "Image height");
  gen->add_option("--rate", cfg.scenario.frame_rate, "Frame rate");
  gen->add_option("--drop", cfg.scenario.drop_rate, "Probability a true box is not detected");
  gen->add_option("--jitter", cfg.scenario.jitter_px, "Uniform box noise half-width in px");
  gen->add_option("--fp", cfg.scenario.fp_rate, "Expected false detections per frame");
  gen->add_option("--seed", cfg.scenario.seed, "Seed of the first sequence; sequence i uses seed + i");
  gen->add_option("--platforms", raw.platforms,
                  "Comma list of platform or platform=count, e.g. handheld=58,surveillance=40,uav=22");
  cli.subs[Command::Gen] = gen;
}

unsigned jobs_from_env() {
  const char* v = std::getenv(kJobsEnv);
  if (v == nullptr || *v == '\0') return 1;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1) throw UsageError(std::string(kJobsEnv) + " must be a positive integer, got '" + v + "'");
  return static_cast<unsigned>(n);
}

std::vector<Platform> parse_platform_list(const std::string& text, bool& counted) {
  std::vector<Platform> out;
  counted = false;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t count = 1;
    if (const auto eq = item.find('='); eq != std::string::npos) {
      counted = true;
      try {
        count = std::stoul(item.substr(eq + 1));
      } catch (const std::exception&) {
        throw UsageError("--platforms: bad count in '" + item + "'");
      }
      item = item.substr(0, eq);
    }
    const Platform p = parse_platform(item);
    if (p == Platform::Unknown) throw UsageError("--platforms: unknown platform '" + item + "'");
    out.insert(out.end(), count, p);
  }
  if (out.empty()) throw UsageError("--platforms: empty list");
  return out;
}

void finish(CliConfig& cfg, const Raw& raw, const Cli& cli) {
  cfg.format = raw.format == "machine" ? OutputFormat::Machine : OutputFormat::Table;
  for (const auto& [cmd, sub] : cli.subs) {
    if (sub->parsed()) cfg.command = cmd;
  }
  const CLI::App* sub = cli.subs.at(cfg.command);
  if (sub->get_option_no_throw("--jobs") != nullptr && sub->count("--jobs") == 0) cfg.jobs = jobs_from_env();

  switch (cfg.command) {
    case Command::Stats:
      if (cfg.dataset.empty()) {
        if (!raw.videos || !raw.frames || !raw.boxes) {
          throw UsageError("stats: give --dataset, or --videos, --frames and --boxes");
        }
        cfg.n_videos = *raw.videos;
        cfg.n_frames = *raw.frames;
        cfg.n_boxes = *raw.boxes;
      } else if (raw.videos || raw.frames || raw.boxes) {
        throw UsageError("stats: --dataset cannot be combined with count options");
      }
      break;
    case Command::Evaluate:
      cfg.protocol.kind = raw.protocol == 2 ? ProtocolKind::II : ProtocolKind::I;
      if (!raw.platform.empty()) {
        if (cfg.protocol.kind != ProtocolKind::II) throw UsageError("evaluate: --platform needs --protocol 2");
        cfg.protocol.platform = parse_platform(raw.platform);
      }
      break;
    case Command::PfmDemo:
    case Command::GradCheck: {
      // The demo fixture defaults to the toy model, the gradient check to its small configuration.
      cfg.pfm = cfg.command == Command::PfmDemo ? pfm::PfmConfig{} : pfm::PfmConfig::gradcheck();
      if (!raw.variant.empty()) cfg.pfm.variant = pfm::parse_variant(raw.variant);
      if (raw.d) cfg.pfm.d = *raw.d;
      if (raw.heads) cfg.pfm.n_heads = *raw.heads;
      if (raw.hidden) cfg.pfm.ffn_hidden = *raw.hidden;
      if (raw.stem) cfg.pfm.stem_channels = *raw.stem;
      const bool overrides = !raw.variant.empty() || raw.d || raw.heads || raw.hidden || raw.stem;
      if (cfg.command == Command::PfmDemo && overrides && !cfg.init_fixture) {
        throw UsageError("pfm-demo: model options only apply with --init");
      }
      break;
    }
    case Command::Gen: {
      cfg.scenario.motion = parse_motion(raw.motion);
      if (!raw.platforms.empty()) {
        bool counted = false;
        cfg.platform_cycle = parse_platform_list(raw.platforms, counted);
        const auto n = static_cast<int>(cfg.platform_cycle.size());
        if (counted && cli.subs.at(Command::Gen)->count("--sequences") == 0) cfg.n_sequences = n;
        if (counted && cfg.n_sequences != n) {
          throw UsageError("gen: --sequences disagrees with the platform counts");
        }
      }
      break;
    }
    default: break;
  }
}

// ---------------------------------------------------------------------------
// Output helpers

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

std::string pct(double v) {
  std::string s = fixed(100.0 * v, 3);
  if (s == "-0.000") s.erase(0, 1);
  return s;
}

class Table {
 public:
  explicit Table(std::vector<std::string> header) : rows_{std::move(header)} {}
  void add(std::vector<std::string> row) { rows_.push_back(std::move(row)); }

  // First column left-aligned, the rest right-aligned.
  void print(std::ostream& out) const {
    std::vector<std::size_t> width(rows_.front().size(), 0);
    for (const auto& r : rows_) {
      for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
    }
    for (const auto& r : rows_) {
      std::string line;
      for (std::size_t c = 0; c < r.size(); ++c) {
        const std::string pad(width[c] - r[c].size(), ' ');
        if (c == 0) {
          line += r[c] + pad;
        } else {
          line += "  " + pad + r[c];
        }
      }
      while (!line.empty() && line.back() == ' ') line.pop_back();
      out << line << '\n';
    }
  }

 private:
  std::vector<std::vector<std::string>> rows_;
};

/// Runs fn(i) for i in [0, n) on up to `jobs` threads; rethrows the first
/// failure by index.
void parallel_for(std::size_t n, unsigned jobs, const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::min<std::size_t>(std::max(jobs, 1u), n);
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::vector<fs::path> sequence_dirs(const fs::path& root) {
  if (!fs::is_directory(root)) throw Error(ErrorCode::Unreadable, "not a directory: " + root.string());
  if (fs::exists(root / "seqinfo.ini")) return {root};
  std::vector<fs::path> dirs = list_sequences(root);
  if (dirs.empty()) throw Error(ErrorCode::Unreadable, "no sequence directories under " + root.string());
  return dirs;
}

std::vector<SequenceAnnotations> load_dataset(const fs::path& root, unsigned jobs) {
  const std::vector<fs::path> dirs = sequence_dirs(root);
  std::vector<SequenceAnnotations> out(dirs.size());
  parallel_for(dirs.size(), jobs, [&](std::size_t i) { out[i] = load_sequence(dirs[i]); });
  return out;
}

std::string_view severity_name(Severity s) { return s == Severity::Error ? "error" : "warning"; }

// ---------------------------------------------------------------------------
// Commands

int run_validate(const CliConfig& cfg, std::ostream& out) {
  const std::vector<fs::path> dirs = sequence_dirs(cfg.dataset);
  std::vector<ValidationReport> reports(dirs.size());
  parallel_for(dirs.size(), cfg.jobs, [&](std::size_t i) { reports[i] = validate_sequence(scan_sequence(dirs[i])); });

  std::vector<std::size_t> order(dirs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dirs[a].filename().string() < dirs[b].filename().string();
  });

  std::size_t n_invalid = 0;
  nlohmann::json doc = {{"sequences", nlohmann::json::object()}};
  for (std::size_t i : order) {
    const ValidationReport& r = reports[i];
    const std::string name = dirs[i].filename().string();
    if (!r.is_valid()) ++n_invalid;
    nlohmann::json issues = nlohmann::json::array();
    for (const Issue& is : r.issues) {
      issues.push_back({{"severity", severity_name(is.severity)},
                        {"code", to_string(is.code)},
                        {"location", is.location},
                        {"message", is.message}});
    }
    doc["sequences"][name] = {{"valid", r.is_valid()}, {"issues", issues}};
    if (cfg.format == OutputFormat::Table) {
      out << name << ": " << (r.is_valid() ? "OK" : "INVALID");
      if (!r.issues.empty()) out << " (" << r.error_count() << " errors, " << r.issues.size() - r.error_count() << " warnings)";
      out << '\n';
      for (const Issue& is : r.issues) {
        out << "  " << severity_name(is.severity) << ' ' << to_string(is.code) << ' ' << is.location << ": "
            << is.message << '\n';
      }
    }
  }
  doc["valid"] = n_invalid == 0;
  if (cfg.format == OutputFormat::Machine) {
    out << doc.dump(2) << '\n';
  } else {
    out << dirs.size() << " sequences, " << n_invalid << " invalid\n";
  }
  return n_invalid == 0 ? kExitOk : kExitFailure;
}

nlohmann::json stats_to_json(const DatasetStats& s) {
  nlohmann::json classes = nlohmann::json::object();
  for (const auto& [cls, c] : s.class_counts) classes[std::to_string(cls)] = {{"tracks", c.tracks}, {"boxes", c.boxes}};
  return {{"videos", s.n_videos},
          {"frames", s.n_frames},
          {"tracks", s.n_tracks},
          {"boxes", s.n_boxes},
          {"duration_s", s.total_duration_s},
          {"density", s.density ? nlohmann::json(*s.density) : nlohmann::json()},
          {"avg_length_s", s.avg_length_s ? nlohmann::json(*s.avg_length_s) : nlohmann::json()},
          {"scale_histogram", s.scale_histogram},
          {"classes", classes}};
}

int run_stats(const CliConfig& cfg, std::ostream& out) {
  const bool from_dataset = !cfg.dataset.empty();
  DatasetStats s;
  if (from_dataset) {
    const std::vector<SequenceAnnotations> seqs = load_dataset(cfg.dataset, 1);
    s = dataset_stats(seqs);
  } else {
    s = stats_from_counts(cfg.n_videos, cfg.n_frames, cfg.n_tracks, cfg.n_boxes, cfg.frame_rate);
  }
  if (cfg.format == OutputFormat::Machine) {
    out << stats_to_json(s).dump(2) << '\n';
    return kExitOk;
  }
  const auto opt = [](const std::optional<double>& v) { return v ? fixed(*v, 2) : std::string("-"); };
  Table overview({"Videos", "Frames", "Tracks", "Boxes", "Duration(s)", "Density", "AvgLength(s)"});
  overview.add({std::to_string(s.n_videos), std::to_string(s.n_frames), std::to_string(s.n_tracks),
                std::to_string(s.n_boxes), fixed(s.total_duration_s, 2), opt(s.density), opt(s.avg_length_s)});
  overview.print(out);
  if (!from_dataset) return kExitOk;

  out << '\n';
  Table classes({"Class", "Tracks", "Boxes"});
  for (const auto& [cls, c] : s.class_counts) classes.add({std::to_string(cls), std::to_string(c.tracks), std::to_string(c.boxes)});
  classes.print(out);

  out << '\n';
  static const std::array<std::string, kScaleBins> labels{"(0,11^2]",   "(11^2,22^2]", "(22^2,32^2]",
                                                          "(32^2,64^2]", "(64^2,96^2]", "(96^2,inf)"};
  Table scales({"Scale", "Boxes", "Share(%)"});
  for (std::size_t b = 0; b < kScaleBins; ++b) {
    const double share = s.n_boxes > 0 ? static_cast<double>(s.scale_histogram[b]) / s.n_boxes : 0.0;
    scales.add({labels[b], std::to_string(s.scale_histogram[b]), pct(share)});
  }
  scales.print(out);
  return kExitOk;
}

std::vector<std::string> metric_row(const std::string& label, const MetricsSummary& m) {
  return {label,          pct(m.hota.hota), pct(m.hota.deta), pct(m.hota.assa),
          pct(m.clear.mota), pct(m.clear.motp), pct(m.id.idf1), std::to_string(m.clear.fp),
          std::to_string(m.clear.fn), std::to_string(m.clear.idsw)};
}

int run_evaluate(const CliConfig& cfg, std::ostream& out) {
  const std::vector<SequenceAnnotations> dataset = load_dataset(cfg.dataset, cfg.jobs);
  if (!fs::is_directory(cfg.results)) throw Error(ErrorCode::Unreadable, "not a directory: " + cfg.results.string());

  std::vector<std::optional<TrajectorySet>> loaded(dataset.size());
  parallel_for(dataset.size(), cfg.jobs, [&](std::size_t i) {
    const fs::path file = cfg.results / (dataset[i].meta.name + ".txt");
    if (!fs::exists(file)) return;
    try {
      loaded[i] = to_trajectories(parse_annotations(read_text_file(file), dataset[i].meta), false);
    } catch (const Error& e) {
      throw Error(e.code(), file.string() + ": " + e.what());
    }
  });
  std::map<std::string, TrajectorySet> results;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (loaded[i]) results.emplace(dataset[i].meta.name, std::move(*loaded[i]));
  }

  const EvaluationReport report = evaluate(dataset, results, cfg.protocol, cfg.jobs);
  if (cfg.format == OutputFormat::Machine) {
    out << to_json(report).dump(2) << '\n';
    return kExitOk;
  }
  Table t({"Sequence", "HOTA", "DetA", "AssA", "MOTA", "MOTP", "IDF1", "FP", "FN", "IDSW"});
  for (const auto& [name, r] : report.per_sequence) t.add(metric_row(name, r.metrics));
  if (report.protocol.kind == ProtocolKind::II) {
    for (const GroupReport& g : report.groups) {
      if (g.sequences.empty()) {
        t.add({"[" + g.label + "]", "-", "-", "-", "-", "-", "-", "-", "-", "-"});
      } else {
        t.add(metric_row("[" + g.label + "]", g.pooled));
      }
    }
  }
  t.add(metric_row("COMBINED", report.pooled));
  if (report.group_mean) {
    const GroupMean& m = *report.group_mean;
    t.add({"GROUP-MEAN", pct(m.hota), pct(m.deta), pct(m.assa), pct(m.mota), pct(m.motp), pct(m.idf1), "-", "-", "-"});
  }
  t.print(out);
  return kExitOk;
}

std::vector<std::vector<Detection>> tracker_input(const std::vector<Detection>& dets, int n_frames,
                                                  double nms_threshold) {
  std::vector<std::vector<Detection>> out;
  const auto by_frame = group_by_frame(dets, n_frames);
  for (const auto& frame : by_frame) {
    std::vector<Detection> vis, ir, fused;
    for (const Detection& d : frame) {
      (d.modality == Modality::Visible ? vis : d.modality == Modality::Thermal ? ir : fused).push_back(d);
    }
    // Single-modality frames pass through unchanged.
    std::vector<Detection> merged = vis.empty() ? ir : ir.empty() ? vis : merge_modal_detections(vis, ir, nms_threshold);
    merged.insert(merged.end(), fused.begin(), fused.end());
    out.push_back(std::move(merged));
  }
  return out;
}

int run_track(const CliConfig& cfg, std::ostream& out) {
  const std::vector<fs::path> dirs = sequence_dirs(cfg.dataset);
  std::vector<std::string> names(dirs.size()), texts(dirs.size());
  std::vector<std::size_t> n_tracks(dirs.size()), n_boxes(dirs.size());
  parallel_for(dirs.size(), cfg.jobs, [&](std::size_t i) {
    const SequenceMeta meta = parse_seqinfo(read_text_file(dirs[i] / "seqinfo.ini"));
    const std::vector<Detection> dets = parse_detections(read_text_file(dirs[i] / "det" / "det.txt"));
    const TrajectorySet tracks =
        track_sequence(tracker_input(dets, meta.seq_length, cfg.tracker.nms_threshold), cfg.tracker);
    const AnnotationSet res = to_annotations(tracks);
    names[i] = meta.name;
    texts[i] = serialize_annotations(res);
    n_tracks[i] = tracks.tracks.size();
    n_boxes[i] = res.size();
  });
  fs::create_directories(cfg.results);
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    const fs::path file = cfg.results / (names[i] + ".txt");
    write_text_atomic(file, texts[i]);
    out << names[i] << ": " << n_tracks[i] << " tracks, " << n_boxes[i] << " boxes -> " << file.string() << '\n';
  }
  return kExitOk;
}

void print_grad_cases(const std::vector<pfm::GradCase>& cases, OutputFormat format, std::ostream& out) {
  bool all = true;
  double worst = 0.0;
  for (const auto& c : cases) {
    all = all && c.passed();
    worst = std::max(worst, c.report.max_rel_err);
  }
  if (format == OutputFormat::Machine) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : cases) {
      arr.push_back({{"name", c.name},
                     {"max_rel_err", c.report.max_rel_err},
                     {"max_abs_err", c.report.max_abs_err},
                     {"worst", c.report.worst_param},
                     {"checked", c.report.n_checked},
                     {"refined", c.report.n_refined},
                     {"seconds", c.seconds},
                     {"passed", c.passed()}});
    }
    out << nlohmann::json{{"cases", arr}, {"max_rel_err", worst}, {"tolerance", pfm::kGradTolerance}, {"passed", all}}
               .dump(2)
        << '\n';
    return;
  }
  Table t({"Case", "max_rel_err", "max_abs_err", "Worst", "Checked", "Seconds", "Result"});
  for (const auto& c : cases) {
    t.add({c.name, sci(c.report.max_rel_err), sci(c.report.max_abs_err), c.report.worst_param,
           std::to_string(c.report.n_checked), fixed(c.seconds, 2), c.passed() ? "PASS" : "FAIL"});
  }
  t.print(out);
  out << "max_rel_err " << sci(worst) << " (tolerance " << sci(pfm::kGradTolerance) << ") " << (all ? "PASS" : "FAIL")
      << '\n';
}

int run_gradcheck(const CliConfig& cfg, std::ostream& out) {
  const std::vector<pfm::GradCase> cases = pfm::run_grad_suite(cfg.pfm, cfg.seed, cfg.quick);
  print_grad_cases(cases, cfg.format, out);
  return std::all_of(cases.begin(), cases.end(), [](const auto& c) { return c.passed(); }) ? kExitOk : kExitFailure;
}

constexpr std::array<const char*, 4> kFixtureImages{"vis_t.json", "vis_prev.json", "ir_t.json", "ir_prev.json"};

void write_fixture(const CliConfig& cfg) {
  const pfm::PfmParams p = pfm::PfmParams::random(cfg.pfm, cfg.seed);
  Rng rng(cfg.seed + 1);
  const pfm::PfmConfig& c = cfg.pfm;
  const std::array<int, 4> channels{c.visible_channels, c.visible_channels, c.infrared_channels, c.infrared_channels};
  fs::create_directories(cfg.fixture);
  write_text_atomic(cfg.fixture / "params.json", pfm::params_to_json(p).dump());
  for (std::size_t i = 0; i < kFixtureImages.size(); ++i) {
    const pfm::Image img = pfm::Image::random(channels[i], c.height, c.width, rng);
    write_text_atomic(cfg.fixture / kFixtureImages[i], pfm::image_to_json(img).dump());
  }
  std::vector<Detection> objects;
  for (int i = 0; i < 3; ++i) {
    const double w = std::round(rng.uniform(4.0, c.width / 2.0)), h = std::round(rng.uniform(4.0, c.height / 2.0));
    const Box b{std::round(rng.uniform(0.0, c.width - w)), std::round(rng.uniform(0.0, c.height - h)), w, h};
    objects.push_back(Detection{1, b, 1.0, 1, Modality::Visible});
  }
  write_text_atomic(cfg.fixture / "prev_objects.txt", serialize_detections(objects));
}

int run_pfm_demo(const CliConfig& cfg, std::ostream& out, std::ostream& err) {
  if (cfg.init_fixture) write_fixture(cfg);
  const pfm::PfmParams p = pfm::params_from_json(pfm::read_json_file(cfg.fixture / "params.json"));
  const bool temporal = pfm::uses_temporal(p.config.variant);

  const auto load_image = [&](std::size_t i, int channels) {
    pfm::Image img = pfm::image_from_json(pfm::read_json_file(cfg.fixture / kFixtureImages[i]));
    if (img.channels != channels || img.height != p.config.height || img.width != p.config.width) {
      throw Error(ErrorCode::ShapeMismatch, std::string(kFixtureImages[i]) + " does not match the model configuration");
    }
    return img;
  };
  pfm::PfmImages img;
  img.vis_t = load_image(0, p.config.visible_channels);
  img.ir_t = load_image(2, p.config.infrared_channels);
  if (temporal) {
    img.vis_prev = load_image(1, p.config.visible_channels);
    img.ir_prev = load_image(3, p.config.infrared_channels);
    std::vector<pfm::ObjectCenter> objects;
    for (const Detection& d : parse_detections(read_text_file(cfg.fixture / "prev_objects.txt"))) {
      objects.push_back(pfm::ObjectCenter::from_box(d.box));
    }
    img.heatmap = pfm::render_heatmap(objects, p.config.height, p.config.width).as_image();
  }

  pfm::PfmCache cache;
  const pfm::Matrix fused = pfm::pfm_forward(img, p, &cache, true);
  const std::map<std::string, pfm::Matrix> stages = pfm::stage_outputs(cache, p, fused);
  const nlohmann::json doc = pfm::to_json(stages);
  if (!cfg.output.empty()) write_text_atomic(cfg.output, doc.dump());

  std::vector<pfm::GradCase> cases;
  if (cfg.check_fixture) {
    const auto t0 = std::chrono::steady_clock::now();
    pfm::GradReport r = pfm::check_pfm_at(p, img);
    cases.push_back({"pfm_forward." + std::string(pfm::to_string(p.config.variant)), std::move(r),
                     std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()});
  }

  if (cfg.format == OutputFormat::Machine) {
    if (cfg.output.empty()) out << doc.dump() << '\n';
  } else {
    out << "variant " << pfm::to_string(p.config.variant) << ", d " << p.config.d << ", " << p.config.height << "x"
        << p.config.width << " images\n";
    Table t({"Stage", "Shape", "RMS", "Min", "Max"});
    for (const auto& [name, m] : stages) {
      const double rms = m.size() > 0 ? std::sqrt(m.squaredNorm() / static_cast<double>(m.size())) : 0.0;
      t.add({name, std::to_string(m.rows()) + "x" + std::to_string(m.cols()), fixed(rms, 6),
             fixed(m.size() > 0 ? m.minCoeff() : 0.0, 6), fixed(m.size() > 0 ? m.maxCoeff() : 0.0, 6)});
    }
    t.print(out);
    if (!cfg.output.empty()) out << "stage outputs -> " << cfg.output.string() << '\n';
  }
  if (!cases.empty()) {
    print_grad_cases(cases, OutputFormat::Table, cfg.format == OutputFormat::Machine ? err : out);
    if (!cases.front().passed()) return kExitFailure;
  }
  return kExitOk;
}

std::string sequence_name(const CliConfig& cfg, int i) {
  if (cfg.n_sequences == 1) return cfg.scenario.name;
  char buf[16];
  std::snprintf(buf, sizeof buf, "-%03d", i + 1);
  return cfg.scenario.name + buf;
}

int run_gen(const CliConfig& cfg, std::ostream& out) {
  fs::create_directories(cfg.results);
  if (!cfg.oracle_results.empty()) fs::create_directories(cfg.oracle_results);
  for (int i = 0; i < cfg.n_sequences; ++i) {
    ScenarioSpec spec = cfg.scenario;
    spec.name = sequence_name(cfg, i);
    spec.seed = cfg.scenario.seed + static_cast<std::uint64_t>(i);
    if (!cfg.platform_cycle.empty()) spec.platform = cfg.platform_cycle[static_cast<std::size_t>(i) % cfg.platform_cycle.size()];
    const SyntheticSequence seq = generate_synthetic_sequence(spec);
    const fs::path dir = write_synthetic_sequence(cfg.results, seq);
    if (!cfg.oracle_results.empty()) {
      write_text_atomic(cfg.oracle_results / (spec.name + ".txt"), serialize_annotations(to_annotations(seq.oracle_tracks())));
    }
    out << dir.string() << ": " << seq.gt.size() << " boxes, " << seq.n_dropped << " dropped, " << seq.n_false
        << " false, platform " << to_string(spec.platform) << '\n';
  }
  return kExitOk;
}

}  // namespace

std::string help_text() {
  CliConfig cfg;
  Raw raw;
  Cli cli;
  build(cli, cfg, raw);
  return cli.app.help("", CLI::AppFormatMode::All);
}

ParseOutcome parse_cli(std::span<const std::string> args) {
  CliConfig cfg;
  Raw raw;
  Cli cli;
  build(cli, cfg, raw);
  ParseOutcome outcome;
  std::vector<std::string> reversed(args.rbegin(), args.rend());  // CLI11 consumes from the back
  try {
    cli.app.parse(reversed);
    finish(cfg, raw, cli);
    outcome.config = std::move(cfg);
  } catch (const CLI::CallForHelp&) {
    const CLI::App* asked = nullptr;
    for (const auto& [cmd, sub] : cli.subs) {
      if (sub->parsed()) asked = sub;
    }
    outcome.out = asked != nullptr ? asked->help() : cli.app.help("", CLI::AppFormatMode::All);
  } catch (const CLI::CallForAllHelp&) {
    outcome.out = cli.app.help("", CLI::AppFormatMode::All);
  } catch (const CLI::ParseError& e) {
    outcome.exit_code = kExitUsage;
    outcome.err = std::string("error: ") + e.what() + "\nRun with --help for usage.\n";
  } catch (const UsageError& e) {
    outcome.exit_code = kExitUsage;
    outcome.err = std::string("error: ") + e.what() + "\nRun with --help for usage.\n";
  } catch (const Error& e) {
    outcome.exit_code = kExitUsage;
    outcome.err = std::string("error: ") + e.what() + "\n";
  }
  return outcome;
}

int execute(const CliConfig& cfg, std::ostream& out, std::ostream& err) {
  try {
    switch (cfg.command) {
      case Command::Validate: return run_validate(cfg, out);
      case Command::Stats: return run_stats(cfg, out);
      case Command::Evaluate: return run_evaluate(cfg, out);
      case Command::Track: return run_track(cfg, out);
      case Command::PfmDemo: return run_pfm_demo(cfg, out, err);
      case Command::GradCheck: return run_gradcheck(cfg, out);
      case Command::Gen: return run_gen(cfg, out);
    }
  } catch (const std::exception& e) {
    err << "vtmot " << to_string(cfg.command) << ": " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}

int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  ParseOutcome p = parse_cli(args);
  out << p.out;
  err << p.err;
  if (!p.config) return p.exit_code;
  return execute(*p.config, out, err);
}

}  // namespace vtmot
