// SPDX-License-Identifier: Apache-2.0
#include "vtmot/trajectory.hpp"

#include "vtmot/error.hpp"

#include <algorithm>
#include <string>

namespace vtmot {

char modality_code(Modality m) {
  switch (m) {
    case Modality::Visible: return 'V';
    case Modality::Thermal: return 'T';
    case Modality::Fused: return 'F';
  }
  return '?';
}

void TrajectorySet::add(int id, int frame, const Box& box, int class_id) {
  auto [it, inserted] = tracks.try_emplace(id);
  Trajectory& t = it->second;
  if (inserted) t.class_id = class_id;
  if (!t.points.empty() && t.points.back().frame >= frame) {
    throw Error(ErrorCode::InvalidValue,
                "track " + std::to_string(id) + ": frame " + std::to_string(frame) +
                    " does not follow frame " + std::to_string(t.points.back().frame));
  }
  t.points.push_back({frame, box});
}

std::size_t TrajectorySet::box_count() const {
  std::size_t n = 0;
  for (const auto& [id, t] : tracks) n += t.points.size();
  return n;
}

int TrajectorySet::max_frame() const {
  int m = 0;
  for (const auto& [id, t] : tracks) {
    if (!t.points.empty()) m = std::max(m, t.points.back().frame);
  }
  return m;
}

}  // namespace vtmot
