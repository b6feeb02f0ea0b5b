// SPDX-License-Identifier: Apache-2.0
//
// Dual-modality sequence format: seqinfo.ini, gt.txt / gt1.txt (9 columns),
// det.txt (8 columns), on-disk sequence trees, validation and statistics.
//
// On-disk layout of one sequence:
//
//   <name>/seqinfo.ini
//   <name>/<imDir>/000001.jpg ...      visible frames
//   <name>/<imDirIr>/000001.jpg ...    thermal frames, same names
//   <name>/gt/gt.txt                   ground truth
//   <name>/det/det.txt                 optional detections
#pragma once

#include "vtmot/assignment.hpp"
#include "vtmot/error.hpp"
#include "vtmot/trajectory.hpp"

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace vtmot {

enum class Platform { UAV, Surveillance, Handheld, Unknown };

std::string_view to_string(Platform p);
/// Accepts uav/drone, surveillance, handheld (any case); anything else is Unknown.
Platform parse_platform(std::string_view s);

struct SequenceMeta {
  std::string name;
  double frame_rate = 25.0;
  int seq_length = 1;
  std::string visible_dir = "visible";
  std::string infrared_dir = "infrared";
  std::string image_ext = ".jpg";
  int visible_width = 1;
  int visible_height = 1;
  int infrared_width = 1;
  int infrared_height = 1;
  Platform platform = Platform::Unknown;

  friend bool operator==(const SequenceMeta&, const SequenceMeta&) = default;
};

/// Parses the `[Sequence]` section of a seqinfo.ini.
///
/// Required keys: name, frameRate, seqLength, imWidth, imHeight. Optional:
/// imDir (visible), imDirIr (infrared), imWidthIr/imHeightIr (default to the
/// visible size), imExt (.jpg), platform (unknown). Unknown keys are ignored.
/// Throws Error(MissingKey) or Error(InvalidValue).
SequenceMeta parse_seqinfo(std::string_view text);
std::string serialize_seqinfo(const SequenceMeta& meta);

struct AnnotationRecord {
  int frame = 1;
  int track_id = 1;
  Box box;
  int valid = 1;
  int class_id = 1;
  int reserved = 1;

  friend bool operator==(const AnnotationRecord&, const AnnotationRecord&) = default;
};

/// Ground-truth records sorted by (frame, track_id), unique per (frame, track_id).
class AnnotationSet {
 public:
  AnnotationSet() = default;
  /// Sorts the records and checks every record invariant. Throws Error.
  explicit AnnotationSet(std::vector<AnnotationRecord> records);

  const std::vector<AnnotationRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  /// Records of one frame, possibly empty.
  std::span<const AnnotationRecord> frame(int frame) const;
  int max_frame() const { return records_.empty() ? 0 : records_.back().frame; }

  friend bool operator==(const AnnotationSet& a, const AnnotationSet& b) {
    return a.records_ == b.records_;
  }

 private:
  std::vector<AnnotationRecord> records_;
  std::map<int, std::pair<std::size_t, std::size_t>> frame_index_;
};

enum class Severity { Warning, Error };

struct Issue {
  Severity severity = Severity::Error;
  ErrorCode code = ErrorCode::InvalidValue;
  std::string location;
  std::string message;
};

/// Strict parse of a gt.txt body. Throws Error for the first violation
/// (ColumnCount, InvalidValue, InvalidClass, DuplicateEntry, FrameOutOfRange).
AnnotationSet parse_annotations(std::string_view text, const SequenceMeta& meta);

/// Lenient parse: keeps every acceptable record and reports each violation.
struct AnnotationScan {
  std::vector<AnnotationRecord> records;
  std::vector<Issue> issues;
};
AnnotationScan scan_annotations(std::string_view text, const SequenceMeta& meta);

/// Canonical text: one newline-terminated line per record, no spaces,
/// integral reals without a decimal point, other reals in shortest round-trip form.
std::string serialize_annotations(const AnnotationSet& set);

/// Same records with every class label set to 1 (gt1.txt semantics).
AnnotationSet collapse_classes(const AnnotationSet& set);

/// det.txt: `frame,x,y,w,h,score,class,modality` with modality V, T or F.
std::vector<Detection> parse_detections(std::string_view text);
std::string serialize_detections(std::span<const Detection> dets);

/// Groups records by track id. With valid_only, records flagged valid=0 are skipped.
TrajectorySet to_trajectories(const AnnotationSet& set, bool valid_only);
/// Tracker output in the 9-column format (valid 1, class as tracked, reserved 1).
AnnotationSet to_annotations(const TrajectorySet& tracks);

struct ValidationReport {
  std::vector<Issue> issues;

  bool is_valid() const;
  std::size_t error_count() const;
  bool has(ErrorCode code) const;
};

/// File listings of one sequence directory, gathered without throwing.
struct SequencePair {
  std::filesystem::path root;
  std::optional<SequenceMeta> meta;
  std::vector<std::string> visible_frames;   // sorted file names
  std::vector<std::string> infrared_frames;  // sorted file names
  std::optional<std::string> gt_text;
  std::vector<Issue> load_issues;
};

SequencePair scan_sequence(const std::filesystem::path& dir);
ValidationReport validate_sequence(const SequencePair& pair);

/// Zero-padded frame file name, e.g. 000001.jpg.
std::string frame_filename(int frame, std::string_view ext);

struct SequenceAnnotations {
  SequenceMeta meta;
  AnnotationSet gt;
};

/// Reads seqinfo.ini and gt/gt.txt of one sequence. Throws Error.
SequenceAnnotations load_sequence(const std::filesystem::path& dir);
/// Sorted sub-directories of `root` that contain a seqinfo.ini.
std::vector<std::filesystem::path> list_sequences(const std::filesystem::path& root);

std::string read_text_file(const std::filesystem::path& path);
/// Writes to a sibling temporary file and renames it into place.
void write_text_atomic(const std::filesystem::path& path, std::string_view text);

/// Writes a full sequence tree with zero-byte placeholder frames.
void write_sequence(const std::filesystem::path& dir, const SequenceMeta& meta,
                    const AnnotationSet& gt, std::span<const Detection> dets);

// ---------------------------------------------------------------------------
// Statistics

inline constexpr std::size_t kScaleBins = 6;

/// Scale bin of a box area, 1..6, over the right-closed intervals
/// (0,11²], (11²,22²], (22²,32²], (32²,64²], (64²,96²], (96²,inf).
/// Non-positive areas return 0.
int scale_bin(double area);

struct ClassCount {
  std::size_t tracks = 0;
  std::size_t boxes = 0;

  friend bool operator==(const ClassCount&, const ClassCount&) = default;
};

struct DatasetStats {
  std::size_t n_videos = 0;
  std::size_t n_frames = 0;
  std::size_t n_tracks = 0;
  std::size_t n_boxes = 0;
  double total_duration_s = 0.0;
  std::optional<double> density;       // boxes per frame; empty when n_frames == 0
  std::optional<double> avg_length_s;  // seconds per video; empty when n_videos == 0
  std::array<std::size_t, kScaleBins> scale_histogram{};
  std::map<int, ClassCount> class_counts;
};

DatasetStats dataset_stats(std::span<const SequenceAnnotations> sequences);

/// Statistics from aggregate counts only, at a uniform frame rate.
DatasetStats stats_from_counts(std::size_t n_videos, std::size_t n_frames, std::size_t n_tracks,
                               std::size_t n_boxes, double frame_rate);

}  // namespace vtmot
