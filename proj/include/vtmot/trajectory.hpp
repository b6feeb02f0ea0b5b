// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "vtmot/assignment.hpp"

#include <map>
#include <vector>

namespace vtmot {

/// Source stream of a detection; Fused marks a box confirmed by both streams.
enum class Modality { Visible, Thermal, Fused };

char modality_code(Modality m);  // 'V', 'T', 'F'

struct Detection {
  int frame = 0;
  Box box;
  double score = 1.0;
  int class_id = 1;
  Modality modality = Modality::Visible;

  friend bool operator==(const Detection&, const Detection&) = default;
};

struct TrajectoryPoint {
  int frame = 0;
  Box box;

  friend bool operator==(const TrajectoryPoint&, const TrajectoryPoint&) = default;
};

struct Trajectory {
  int class_id = 1;
  std::vector<TrajectoryPoint> points;  // strictly increasing frames

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

/// Boxes grouped by identity. Frames are strictly increasing inside each track.
struct TrajectorySet {
  std::map<int, Trajectory> tracks;

  /// Appends a point; throws Error(InvalidValue) if frame does not increase.
  void add(int id, int frame, const Box& box, int class_id = 1);
  std::size_t box_count() const;
  int max_frame() const;
  bool empty() const { return tracks.empty(); }

  friend bool operator==(const TrajectorySet&, const TrajectorySet&) = default;
};

}  // namespace vtmot
