// SPDX-License-Identifier: Apache-2.0
//
// Seeded synthetic sequences with exact bookkeeping, for end-to-end checks of
// the tracker and the metrics.
//
// Generation order (all draws from one Rng seeded with spec.seed):
//   per track, in id order: class (bernoulli 0.5 -> 2 else 1), width
//   U[24,64), height U[48,128), then the motion endpoints;
//   per frame, per track in id order: drop (bernoulli drop_rate); if kept,
//   jitter of x, y, w, h (each U[-j,j) when j > 0) and score U[0.5,1);
//   per frame, false positives: count floor(fp_rate) + bernoulli(frac), each
//   placed by up to 100 tries of w U[16,48), h U[16,48), x U[0,W-w),
//   y U[0,H-h) until it overlaps no ground-truth box, then score U[0.4,1)
//   and class (bernoulli 0.5 -> 2 else 1).
// Coordinates are rounded to 1/100 px.
#pragma once

#include "vtmot/mot_data.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace vtmot {

enum class Motion { Linear, Crossing, Stationary };

std::string_view to_string(Motion m);
Motion parse_motion(std::string_view s);

struct ScenarioSpec {
  std::string name = "synthetic";
  int n_tracks = 3;
  int n_frames = 50;
  Motion motion = Motion::Linear;
  int width = 640;
  int height = 512;
  double frame_rate = 25.0;
  double drop_rate = 0.0;  // probability a ground-truth box yields no detection
  double jitter_px = 0.0;  // half-width of the uniform noise on x, y, w, h
  double fp_rate = 0.0;    // expected false boxes per frame
  std::uint64_t seed = 1;
  Platform platform = Platform::Unknown;

  /// Throws Error(InvalidValue) for out-of-range fields.
  void validate() const;
};

/// A detection with its ground-truth source; source_id is 0 for false positives.
struct LabeledDetection {
  Detection det;
  int source_id = 0;
};

struct SyntheticSequence {
  SequenceMeta meta;
  AnnotationSet gt;
  std::vector<std::vector<LabeledDetection>> frames;  // element i holds frame i+1
  std::size_t n_dropped = 0;
  std::size_t n_false = 0;

  std::vector<std::vector<Detection>> detections_by_frame() const;
  std::vector<Detection> all_detections() const;
  /// Detections as a tracker output with perfect identities: true boxes keep
  /// their source id, each false box gets a fresh id.
  TrajectorySet oracle_tracks() const;
};

SyntheticSequence generate_synthetic_sequence(const ScenarioSpec& spec);

struct ExpectedCounts {
  std::size_t n_gt = 0;
  std::size_t fn = 0;
  std::size_t fp = 0;

  friend bool operator==(const ExpectedCounts&, const ExpectedCounts&) = default;
};

/// Lower bound on the IoU between a w x h box and any copy with every
/// coordinate moved by at most j.
double jitter_iou_bound(double w, double h, double j);

/// Counts implied by the generator's bookkeeping when the detections are
/// scored as a tracker output (IoU threshold 0.5). Throws Error(InvalidValue)
/// if the jitter could push a surviving detection below IoU 0.5.
ExpectedCounts expected_counts(const ScenarioSpec& spec, const SyntheticSequence& seq);

/// Writes <root>/<name>/ with placeholder frames, seqinfo, gt and det.
std::filesystem::path write_synthetic_sequence(const std::filesystem::path& root, const SyntheticSequence& seq);

}  // namespace vtmot
