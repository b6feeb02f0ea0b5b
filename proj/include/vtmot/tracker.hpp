// SPDX-License-Identifier: Apache-2.0
//
// Tracking-by-detection baseline: constant-velocity Kalman filter on
// (cx, cy, w, h), IoU association through the assignment solver, track
// lifecycle, and merging of visible/thermal detections.
#pragma once

#include "vtmot/assignment.hpp"
#include "vtmot/trajectory.hpp"

#include <Eigen/Core>

#include <span>
#include <vector>

namespace vtmot {

using StateVector = Eigen::Matrix<double, 8, 1>;
using StateMatrix = Eigen::Matrix<double, 8, 8>;
using MeasurementVector = Eigen::Matrix<double, 4, 1>;
using MeasurementMatrix = Eigen::Matrix<double, 4, 4>;

/// Noise model. Standard deviations are fractions of the box height.
struct KalmanConfig {
  double std_weight_position = 1.0 / 20.0;
  double std_weight_velocity = 1.0 / 160.0;
  double measurement_scale = 1.0;  // multiplies R
};

struct TrackerConfig {
  double iou_threshold = 0.3;
  int max_age = 30;
  int min_hits = 3;
  double score_birth = 0.4;
  double nms_threshold = 0.65;
  KalmanConfig kalman;
};

enum class TrackStatus { Tentative, Confirmed, Dead };

struct TrackState {
  int id = 0;
  int class_id = 1;
  StateVector mean = StateVector::Zero();  // cx, cy, w, h, vcx, vcy, vw, vh
  StateMatrix covariance = StateMatrix::Identity();
  int age = 0;
  int time_since_update = 0;
  int hits = 0;  // consecutive updates
  TrackStatus status = TrackStatus::Tentative;

  Box box() const;
};

MeasurementVector to_measurement(const Box& b);
Box from_measurement(const MeasurementVector& z);

StateMatrix transition_matrix();
StateMatrix process_noise(const StateVector& mean, const KalmanConfig& cfg);
MeasurementMatrix measurement_noise(const StateVector& mean, const KalmanConfig& cfg);

/// New track centred on the detection with zero velocity.
TrackState initiate_track(int id, const Detection& d, const KalmanConfig& cfg, int min_hits);

/// x <- F x, P <- F P F^T + Q; age and time_since_update advance. A track
/// that missed its previous frame loses its hit streak.
TrackState kalman_predict(const TrackState& s, const KalmanConfig& cfg);

/// Linear update with measurement (cx, cy, w, h). Throws Error(SingularMatrix)
/// if the innovation covariance is not positive definite, Error(InvalidValue)
/// for a zero-area detection.
TrackState kalman_update(const TrackState& s, const Detection& d, const KalmanConfig& cfg, int min_hits);

/// Greedy per-class NMS over the union of both lists, highest score first.
/// A survivor that suppressed a box from the other list becomes Fused.
/// Survivors keep their score and are returned in input order (vis, then ir).
std::vector<Detection> merge_modal_detections(std::span<const Detection> vis, std::span<const Detection> ir,
                                              double nms_threshold);

struct TrackOutput {
  int id = 0;
  Box box;
  int class_id = 1;
};

class Tracker {
 public:
  explicit Tracker(TrackerConfig cfg = {});

  /// Consumes the detections of the next frame and returns the boxes of the
  /// tracks that were updated in it, sorted by id. Tracks are reported once
  /// confirmed; during the first min_hits frames of a run every updated
  /// track is reported.
  std::vector<TrackOutput> step(std::span<const Detection> dets);

  const std::vector<TrackState>& tracks() const { return tracks_; }
  int frame_count() const { return frame_count_; }
  const TrackerConfig& config() const { return cfg_; }

 private:
  TrackerConfig cfg_;
  std::vector<TrackState> tracks_;
  int next_id_ = 1;
  int frame_count_ = 0;
};

/// Runs a fresh tracker over frames 1..N (element i holds frame i+1).
TrajectorySet track_sequence(std::span<const std::vector<Detection>> per_frame, const TrackerConfig& cfg = {});

/// Buckets detections by frame into frames 1..n_frames, dropping others.
std::vector<std::vector<Detection>> group_by_frame(std::span<const Detection> dets, int n_frames);

}  // namespace vtmot
