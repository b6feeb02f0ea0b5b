// SPDX-License-Identifier: Apache-2.0
#include "vtmot/mot_data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <system_error>

namespace vtmot {

namespace fs = std::filesystem;

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(s.substr(start)));
      return out;
    }
    out.push_back(trim(s.substr(start, pos - start)));
    start = pos + 1;
  }
}

std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t pos = text.find('\n', start);
    if (pos == std::string_view::npos) pos = text.size();
    std::string_view line = text.substr(start, pos - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    out.push_back(line);
    start = pos + 1;
  }
  return out;
}

std::optional<double> parse_real(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

// Integer columns accept integral reals such as "3.0".
std::optional<int> parse_integral(std::string_view s) {
  const auto v = parse_real(s);
  if (!v || *v != std::trunc(*v) || std::fabs(*v) > 2.0e9) return std::nullopt;
  return static_cast<int>(*v);
}

std::string format_real(double v) {
  if (v == std::trunc(v) && std::fabs(v) < 1e15) {
    return std::to_string(static_cast<long long>(v));
  }
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

Issue make_issue(ErrorCode code, std::string location, std::string message,
                 Severity severity = Severity::Error) {
  return Issue{severity, code, std::move(location), std::move(message)};
}

// Record-level checks that do not need sequence metadata.
std::optional<Issue> check_record(const AnnotationRecord& r, const std::string& where) {
  if (r.frame < 1) return make_issue(ErrorCode::InvalidValue, where, "frame must be >= 1");
  if (r.track_id < 1) return make_issue(ErrorCode::InvalidValue, where, "track id must be >= 1");
  if (!(r.box.w > 0.0) || !(r.box.h > 0.0)) {
    return make_issue(ErrorCode::InvalidValue, where, "box width and height must be positive");
  }
  if (!std::isfinite(r.box.x) || !std::isfinite(r.box.y) || !std::isfinite(r.box.w) ||
      !std::isfinite(r.box.h)) {
    return make_issue(ErrorCode::InvalidValue, where, "box coordinates must be finite");
  }
  if (r.valid != 0 && r.valid != 1) return make_issue(ErrorCode::InvalidValue, where, "validity must be 0 or 1");
  if (r.class_id != 1 && r.class_id != 2) {
    return make_issue(ErrorCode::InvalidClass, where,
                      "class label " + std::to_string(r.class_id) + " is not 1 or 2");
  }
  if (r.reserved != 1) return make_issue(ErrorCode::InvalidValue, where, "ninth column must be 1");
  return std::nullopt;
}

bool record_less(const AnnotationRecord& a, const AnnotationRecord& b) {
  return std::tie(a.frame, a.track_id) < std::tie(b.frame, b.track_id);
}

}  // namespace

// ---------------------------------------------------------------------------
// seqinfo.ini

std::string_view to_string(Platform p) {
  switch (p) {
    case Platform::UAV: return "UAV";
    case Platform::Surveillance: return "surveillance";
    case Platform::Handheld: return "handheld";
    case Platform::Unknown: return "unknown";
  }
  return "unknown";
}

Platform parse_platform(std::string_view s) {
  const std::string v = lower(trim(s));
  if (v == "uav" || v == "drone") return Platform::UAV;
  if (v == "surveillance") return Platform::Surveillance;
  if (v == "handheld") return Platform::Handheld;
  return Platform::Unknown;
}

SequenceMeta parse_seqinfo(std::string_view text) {
  std::map<std::string, std::string, std::less<>> kv;
  bool in_sequence = true;  // keys before any section header are accepted
  for (std::string_view line : lines_of(text)) {
    line = trim(line);
    if (line.empty() || line.front() == ';' || line.front() == '#') continue;
    if (line.front() == '[') {
      const std::size_t close = line.find(']');
      const std::string section = lower(trim(line.substr(1, close == std::string_view::npos ? line.npos : close - 1)));
      in_sequence = section == "sequence";
      continue;
    }
    if (!in_sequence) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) continue;
    kv[std::string(trim(line.substr(0, eq)))] = std::string(trim(line.substr(eq + 1)));
  }

  auto require = [&](std::string_view key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw Error(ErrorCode::MissingKey, "seqinfo.ini lacks '" + std::string(key) + "'");
    return it->second;
  };
  auto positive_int = [&](std::string_view key, const std::string& value) {
    const auto v = parse_integral(value);
    if (!v || *v <= 0) {
      throw Error(ErrorCode::InvalidValue,
                  "seqinfo.ini '" + std::string(key) + "' must be a positive integer, got '" + value + "'");
    }
    return *v;
  };

  SequenceMeta meta;
  meta.name = require("name");
  const std::string& rate = require("frameRate");
  const auto fr = parse_real(rate);
  if (!fr || *fr <= 0.0) throw Error(ErrorCode::InvalidValue, "seqinfo.ini 'frameRate' must be positive, got '" + rate + "'");
  meta.frame_rate = *fr;
  meta.seq_length = positive_int("seqLength", require("seqLength"));
  meta.visible_width = positive_int("imWidth", require("imWidth"));
  meta.visible_height = positive_int("imHeight", require("imHeight"));
  meta.infrared_width = meta.visible_width;
  meta.infrared_height = meta.visible_height;

  if (auto it = kv.find("imDir"); it != kv.end()) meta.visible_dir = it->second;
  if (auto it = kv.find("imDirIr"); it != kv.end()) meta.infrared_dir = it->second;
  if (auto it = kv.find("imExt"); it != kv.end()) meta.image_ext = it->second;
  if (auto it = kv.find("imWidthIr"); it != kv.end()) meta.infrared_width = positive_int("imWidthIr", it->second);
  if (auto it = kv.find("imHeightIr"); it != kv.end()) meta.infrared_height = positive_int("imHeightIr", it->second);
  if (auto it = kv.find("platform"); it != kv.end()) meta.platform = parse_platform(it->second);
  return meta;
}

std::string serialize_seqinfo(const SequenceMeta& meta) {
  std::ostringstream out;
  out << "[Sequence]\n"
      << "name=" << meta.name << "\n"
      << "imDir=" << meta.visible_dir << "\n"
      << "imDirIr=" << meta.infrared_dir << "\n"
      << "frameRate=" << format_real(meta.frame_rate) << "\n"
      << "seqLength=" << meta.seq_length << "\n"
      << "imWidth=" << meta.visible_width << "\n"
      << "imHeight=" << meta.visible_height << "\n"
      << "imWidthIr=" << meta.infrared_width << "\n"
      << "imHeightIr=" << meta.infrared_height << "\n"
      << "imExt=" << meta.image_ext << "\n"
      << "platform=" << to_string(meta.platform) << "\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// Annotations

AnnotationSet::AnnotationSet(std::vector<AnnotationRecord> records) : records_(std::move(records)) {
  std::stable_sort(records_.begin(), records_.end(), record_less);
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const AnnotationRecord& r = records_[i];
    if (auto issue = check_record(r, "record " + std::to_string(i))) {
      throw Error(issue->code, issue->message);
    }
    if (i > 0 && records_[i - 1].frame == r.frame && records_[i - 1].track_id == r.track_id) {
      throw Error(ErrorCode::DuplicateEntry, "track " + std::to_string(r.track_id) +
                                                 " appears twice in frame " + std::to_string(r.frame));
    }
  }
  std::size_t begin = 0;
  for (std::size_t i = 1; i <= records_.size(); ++i) {
    if (i == records_.size() || records_[i].frame != records_[begin].frame) {
      frame_index_[records_[begin].frame] = {begin, i};
      begin = i;
    }
  }
}

std::span<const AnnotationRecord> AnnotationSet::frame(int frame) const {
  const auto it = frame_index_.find(frame);
  if (it == frame_index_.end()) return {};
  return std::span<const AnnotationRecord>(records_).subspan(it->second.first,
                                                            it->second.second - it->second.first);
}

AnnotationScan scan_annotations(std::string_view text, const SequenceMeta& meta) {
  AnnotationScan scan;
  std::set<std::pair<int, int>> seen;
  const auto lines = lines_of(text);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    const std::string_view line = trim(lines[ln]);
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(ln + 1);
    const auto f = split(line, ',');
    if (f.size() != 9) {
      scan.issues.push_back(make_issue(ErrorCode::ColumnCount, where,
                                       "expected 9 columns, found " + std::to_string(f.size())));
      continue;
    }
    const auto frame = parse_integral(f[0]);
    const auto id = parse_integral(f[1]);
    const auto x = parse_real(f[2]);
    const auto y = parse_real(f[3]);
    const auto w = parse_real(f[4]);
    const auto h = parse_real(f[5]);
    const auto valid = parse_integral(f[6]);
    const auto cls = parse_integral(f[7]);
    const auto reserved = parse_integral(f[8]);
    if (!frame || !id || !x || !y || !w || !h || !valid || !cls || !reserved) {
      scan.issues.push_back(make_issue(ErrorCode::InvalidValue, where, "non-numeric field"));
      continue;
    }
    AnnotationRecord r{*frame, *id, Box{*x, *y, *w, *h}, *valid, *cls, *reserved};
    if (auto issue = check_record(r, where)) {
      scan.issues.push_back(std::move(*issue));
      continue;
    }
    if (r.frame > meta.seq_length) {
      scan.issues.push_back(make_issue(ErrorCode::FrameOutOfRange, where,
                                       "frame " + std::to_string(r.frame) + " exceeds seqLength " +
                                           std::to_string(meta.seq_length)));
      continue;
    }
    if (!seen.emplace(r.frame, r.track_id).second) {
      scan.issues.push_back(make_issue(ErrorCode::DuplicateEntry, where,
                                       "track " + std::to_string(r.track_id) + " appears twice in frame " +
                                           std::to_string(r.frame)));
      continue;
    }
    scan.records.push_back(r);
  }
  return scan;
}

AnnotationSet parse_annotations(std::string_view text, const SequenceMeta& meta) {
  AnnotationScan scan = scan_annotations(text, meta);
  if (!scan.issues.empty()) {
    const Issue& first = scan.issues.front();
    throw Error(first.code, first.location + ": " + first.message);
  }
  return AnnotationSet(std::move(scan.records));
}

std::string serialize_annotations(const AnnotationSet& set) {
  std::string out;
  for (const AnnotationRecord& r : set.records()) {
    out += std::to_string(r.frame);
    out += ',';
    out += std::to_string(r.track_id);
    for (double v : {r.box.x, r.box.y, r.box.w, r.box.h}) {
      out += ',';
      out += format_real(v);
    }
    out += ',';
    out += std::to_string(r.valid);
    out += ',';
    out += std::to_string(r.class_id);
    out += ',';
    out += std::to_string(r.reserved);
    out += '\n';
  }
  return out;
}

AnnotationSet collapse_classes(const AnnotationSet& set) {
  std::vector<AnnotationRecord> records = set.records();
  for (AnnotationRecord& r : records) r.class_id = 1;
  return AnnotationSet(std::move(records));
}

// ---------------------------------------------------------------------------
// Detections

std::vector<Detection> parse_detections(std::string_view text) {
  std::vector<Detection> dets;
  const auto lines = lines_of(text);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    const std::string_view line = trim(lines[ln]);
    if (line.empty()) continue;
    const std::string where = "det line " + std::to_string(ln + 1) + ": ";
    const auto f = split(line, ',');
    if (f.size() != 8) {
      throw Error(ErrorCode::ColumnCount, where + "expected 8 columns, found " + std::to_string(f.size()));
    }
    const auto frame = parse_integral(f[0]);
    const auto x = parse_real(f[1]);
    const auto y = parse_real(f[2]);
    const auto w = parse_real(f[3]);
    const auto h = parse_real(f[4]);
    const auto score = parse_real(f[5]);
    const auto cls = parse_integral(f[6]);
    if (!frame || !x || !y || !w || !h || !score || !cls) throw Error(ErrorCode::InvalidValue, where + "non-numeric field");
    if (*frame < 1) throw Error(ErrorCode::InvalidValue, where + "frame must be >= 1");
    if (*w < 0.0 || *h < 0.0) throw Error(ErrorCode::InvalidValue, where + "negative box extent");
    if (*score < 0.0 || *score > 1.0) throw Error(ErrorCode::InvalidValue, where + "score outside [0,1]");
    if (*cls != 1 && *cls != 2) throw Error(ErrorCode::InvalidClass, where + "class label is not 1 or 2");
    Modality m;
    if (f[7] == "V") {
      m = Modality::Visible;
    } else if (f[7] == "T") {
      m = Modality::Thermal;
    } else if (f[7] == "F") {
      m = Modality::Fused;
    } else {
      throw Error(ErrorCode::InvalidValue, where + "modality must be V, T or F");
    }
    dets.push_back(Detection{*frame, Box{*x, *y, *w, *h}, *score, *cls, m});
  }
  std::stable_sort(dets.begin(), dets.end(),
                   [](const Detection& a, const Detection& b) { return a.frame < b.frame; });
  return dets;
}

std::string serialize_detections(std::span<const Detection> dets) {
  std::string out;
  for (const Detection& d : dets) {
    out += std::to_string(d.frame);
    for (double v : {d.box.x, d.box.y, d.box.w, d.box.h, d.score}) {
      out += ',';
      out += format_real(v);
    }
    out += ',';
    out += std::to_string(d.class_id);
    out += ',';
    out += modality_code(d.modality);
    out += '\n';
  }
  return out;
}

TrajectorySet to_trajectories(const AnnotationSet& set, bool valid_only) {
  TrajectorySet out;
  for (const AnnotationRecord& r : set.records()) {
    if (valid_only && r.valid == 0) continue;
    out.add(r.track_id, r.frame, r.box, r.class_id);
  }
  return out;
}

AnnotationSet to_annotations(const TrajectorySet& tracks) {
  std::vector<AnnotationRecord> records;
  records.reserve(tracks.box_count());
  for (const auto& [id, t] : tracks.tracks) {
    for (const TrajectoryPoint& p : t.points) {
      records.push_back(AnnotationRecord{p.frame, id, p.box, 1, t.class_id, 1});
    }
  }
  return AnnotationSet(std::move(records));
}

// ---------------------------------------------------------------------------
// Filesystem

std::string frame_filename(int frame, std::string_view ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06d", frame);
  return std::string(buf) + std::string(ext);
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Unreadable, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw Error(ErrorCode::Unreadable, "cannot read " + path.string());
  return ss.str();
}

void write_text_atomic(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Unreadable, "cannot write " + tmp.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw Error(ErrorCode::Unreadable, "write failed for " + tmp.string());
    }
  }
  fs::rename(tmp, path);
}

namespace {

std::vector<std::string> list_files(const fs::path& dir, std::vector<Issue>& issues, const std::string& label) {
  std::vector<std::string> names;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) {
    issues.push_back(make_issue(ErrorCode::Unreadable, label, "missing directory " + dir.string()));
    return names;
  }
  for (fs::directory_iterator it(dir, ec), end; !ec && it != end; it.increment(ec)) {
    if (it->is_regular_file(ec)) names.push_back(it->path().filename().string());
  }
  if (ec) issues.push_back(make_issue(ErrorCode::Unreadable, label, "cannot list " + dir.string()));
  std::sort(names.begin(), names.end());
  return names;
}

}  // namespace

SequencePair scan_sequence(const fs::path& dir) {
  SequencePair pair;
  pair.root = dir;
  try {
    pair.meta = parse_seqinfo(read_text_file(dir / "seqinfo.ini"));
  } catch (const Error& e) {
    pair.load_issues.push_back(make_issue(e.code(), "seqinfo.ini", e.what()));
    return pair;
  }
  pair.visible_frames = list_files(dir / pair.meta->visible_dir, pair.load_issues, pair.meta->visible_dir);
  pair.infrared_frames = list_files(dir / pair.meta->infrared_dir, pair.load_issues, pair.meta->infrared_dir);
  const fs::path gt = dir / "gt" / "gt.txt";
  std::error_code ec;
  if (fs::exists(gt, ec)) {
    try {
      pair.gt_text = read_text_file(gt);
    } catch (const Error& e) {
      pair.load_issues.push_back(make_issue(e.code(), "gt/gt.txt", e.what()));
    }
  }
  return pair;
}

bool ValidationReport::is_valid() const { return error_count() == 0; }

std::size_t ValidationReport::error_count() const {
  return static_cast<std::size_t>(std::count_if(issues.begin(), issues.end(), [](const Issue& i) {
    return i.severity == Severity::Error;
  }));
}

bool ValidationReport::has(ErrorCode code) const {
  return std::any_of(issues.begin(), issues.end(), [code](const Issue& i) { return i.code == code; });
}

ValidationReport validate_sequence(const SequencePair& pair) {
  ValidationReport report;
  report.issues = pair.load_issues;
  if (!pair.meta) return report;
  const SequenceMeta& meta = *pair.meta;
  const auto& vis = pair.visible_frames;
  const auto& ir = pair.infrared_frames;

  if (vis.size() != ir.size()) {
    report.issues.push_back(make_issue(ErrorCode::FrameCountMismatch, meta.name,
                                       std::to_string(vis.size()) + " visible frames vs " +
                                           std::to_string(ir.size()) + " infrared frames"));
  }
  std::vector<std::string> only_vis, only_ir;
  std::set_difference(vis.begin(), vis.end(), ir.begin(), ir.end(), std::back_inserter(only_vis));
  std::set_difference(ir.begin(), ir.end(), vis.begin(), vis.end(), std::back_inserter(only_ir));
  if (!only_vis.empty() || !only_ir.empty()) {
    std::string msg = "frame names differ between modalities";
    if (!only_vis.empty()) msg += "; visible only: " + only_vis.front();
    if (!only_ir.empty()) msg += "; infrared only: " + only_ir.front();
    report.issues.push_back(make_issue(ErrorCode::FilenameMismatch, meta.name, msg));
  }
  const auto check_length = [&](const std::vector<std::string>& frames, const std::string& label) {
    if (frames.size() != static_cast<std::size_t>(meta.seq_length)) {
      report.issues.push_back(make_issue(ErrorCode::SeqLengthMismatch, label,
                                         "seqLength " + std::to_string(meta.seq_length) + " but " +
                                             std::to_string(frames.size()) + " files"));
    }
  };
  check_length(vis, meta.visible_dir);
  if (ir.size() != vis.size()) check_length(ir, meta.infrared_dir);

  for (std::size_t i = 0; i < vis.size(); ++i) {
    if (vis[i] != frame_filename(static_cast<int>(i) + 1, meta.image_ext)) {
      report.issues.push_back(make_issue(ErrorCode::FilenameMismatch, meta.visible_dir,
                                         "unexpected frame name " + vis[i], Severity::Warning));
      break;
    }
  }

  if (pair.gt_text) {
    AnnotationScan scan = scan_annotations(*pair.gt_text, meta);
    for (Issue& issue : scan.issues) {
      issue.location = "gt/gt.txt " + issue.location;
      report.issues.push_back(std::move(issue));
    }
  } else {
    report.issues.push_back(make_issue(ErrorCode::Unreadable, "gt/gt.txt", "no ground truth", Severity::Warning));
  }
  return report;
}

SequenceAnnotations load_sequence(const fs::path& dir) {
  SequenceAnnotations seq;
  seq.meta = parse_seqinfo(read_text_file(dir / "seqinfo.ini"));
  seq.gt = parse_annotations(read_text_file(dir / "gt" / "gt.txt"), seq.meta);
  return seq;
}

std::vector<fs::path> list_sequences(const fs::path& root) {
  std::vector<fs::path> out;
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw Error(ErrorCode::Unreadable, "not a directory: " + root.string());
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && fs::exists(entry.path() / "seqinfo.ini")) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void write_sequence(const fs::path& dir, const SequenceMeta& meta, const AnnotationSet& gt,
                    std::span<const Detection> dets) {
  for (const std::string& sub : {meta.visible_dir, meta.infrared_dir}) {
    const fs::path d = dir / sub;
    fs::create_directories(d);
    for (int f = 1; f <= meta.seq_length; ++f) {
      std::ofstream touch(d / frame_filename(f, meta.image_ext), std::ios::binary);
      if (!touch) throw Error(ErrorCode::Unreadable, "cannot create frames in " + d.string());
    }
  }
  write_text_atomic(dir / "seqinfo.ini", serialize_seqinfo(meta));
  write_text_atomic(dir / "gt" / "gt.txt", serialize_annotations(gt));
  write_text_atomic(dir / "det" / "det.txt", serialize_detections(dets));
}

// ---------------------------------------------------------------------------
// Statistics

int scale_bin(double area) {
  if (!(area > 0.0)) return 0;
  static constexpr std::array<double, 5> upper{11.0 * 11.0, 22.0 * 22.0, 32.0 * 32.0, 64.0 * 64.0, 96.0 * 96.0};
  for (std::size_t i = 0; i < upper.size(); ++i) {
    if (area <= upper[i]) return static_cast<int>(i) + 1;
  }
  return 6;
}

DatasetStats dataset_stats(std::span<const SequenceAnnotations> sequences) {
  DatasetStats s;
  for (const SequenceAnnotations& seq : sequences) {
    ++s.n_videos;
    s.n_frames += static_cast<std::size_t>(seq.meta.seq_length);
    s.total_duration_s += seq.meta.seq_length / seq.meta.frame_rate;
    std::set<int> ids;
    std::set<std::pair<int, int>> class_ids;
    for (const AnnotationRecord& r : seq.gt.records()) {
      ++s.n_boxes;
      ids.insert(r.track_id);
      if (class_ids.emplace(r.class_id, r.track_id).second) ++s.class_counts[r.class_id].tracks;
      ++s.class_counts[r.class_id].boxes;
      const int bin = scale_bin(r.box.area());
      if (bin > 0) ++s.scale_histogram[static_cast<std::size_t>(bin - 1)];
    }
    s.n_tracks += ids.size();
  }
  if (s.n_frames > 0) s.density = static_cast<double>(s.n_boxes) / static_cast<double>(s.n_frames);
  if (s.n_videos > 0) s.avg_length_s = s.total_duration_s / static_cast<double>(s.n_videos);
  return s;
}

DatasetStats stats_from_counts(std::size_t n_videos, std::size_t n_frames, std::size_t n_tracks,
                               std::size_t n_boxes, double frame_rate) {
  if (!(frame_rate > 0.0)) throw Error(ErrorCode::InvalidValue, "frame rate must be positive");
  DatasetStats s;
  s.n_videos = n_videos;
  s.n_frames = n_frames;
  s.n_tracks = n_tracks;
  s.n_boxes = n_boxes;
  s.total_duration_s = static_cast<double>(n_frames) / frame_rate;
  if (n_frames > 0) s.density = static_cast<double>(n_boxes) / static_cast<double>(n_frames);
  if (n_videos > 0) s.avg_length_s = s.total_duration_s / static_cast<double>(n_videos);
  return s;
}

}  // namespace vtmot
