// SPDX-License-Identifier: Apache-2.0
#include "vtmot/tracker.hpp"

#include "vtmot/error.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <numeric>
#include <utility>

namespace vtmot {

namespace {

constexpr double kMinExtent = 1e-3;

using MeasurementModel = Eigen::Matrix<double, 4, 8>;
using Mask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

MeasurementModel measurement_model() {
  MeasurementModel h = MeasurementModel::Zero();
  h.leftCols<4>().setIdentity();
  return h;
}

void symmetrize(StateMatrix& p) { p = 0.5 * (p + p.transpose()).eval(); }

}  // namespace

Box TrackState::box() const { return from_measurement(mean.head<4>()); }

MeasurementVector to_measurement(const Box& b) {
  MeasurementVector z;
  z << b.cx(), b.cy(), b.w, b.h;
  return z;
}

Box from_measurement(const MeasurementVector& z) {
  return Box{z(0) - 0.5 * z(2), z(1) - 0.5 * z(3), z(2), z(3)};
}

StateMatrix transition_matrix() {
  StateMatrix f = StateMatrix::Identity();
  f.topRightCorner<4, 4>().setIdentity();
  return f;
}

StateMatrix process_noise(const StateVector& mean, const KalmanConfig& cfg) {
  const double h = std::max(mean(3), kMinExtent);
  const double sp = cfg.std_weight_position * h;
  const double sv = cfg.std_weight_velocity * h;
  StateVector diag;
  diag << sp * sp, sp * sp, sp * sp, sp * sp, sv * sv, sv * sv, sv * sv, sv * sv;
  return diag.asDiagonal();
}

MeasurementMatrix measurement_noise(const StateVector& mean, const KalmanConfig& cfg) {
  const double h = std::max(mean(3), kMinExtent);
  const double sp = cfg.std_weight_position * h;
  return MeasurementMatrix::Identity() * (sp * sp * cfg.measurement_scale);
}

TrackState initiate_track(int id, const Detection& d, const KalmanConfig& cfg, int min_hits) {
  TrackState s;
  s.id = id;
  s.class_id = d.class_id;
  s.mean.setZero();
  s.mean.head<4>() = to_measurement(d.box);
  const double h = std::max(d.box.h, kMinExtent);
  const double sp = 2.0 * cfg.std_weight_position * h;
  const double sv = 10.0 * cfg.std_weight_velocity * h;
  StateVector diag;
  diag << sp * sp, sp * sp, sp * sp, sp * sp, sv * sv, sv * sv, sv * sv, sv * sv;
  s.covariance = diag.asDiagonal();
  s.hits = 1;
  s.status = s.hits >= min_hits ? TrackStatus::Confirmed : TrackStatus::Tentative;
  return s;
}

TrackState kalman_predict(const TrackState& s, const KalmanConfig& cfg) {
  TrackState out = s;
  // Keep extents positive: a shrinking velocity that would invert the box is dropped.
  for (int k = 2; k < 4; ++k) {
    if (out.mean(k) + out.mean(k + 4) <= 0.0) out.mean(k + 4) = 0.0;
  }
  const StateMatrix f = transition_matrix();
  out.mean = f * out.mean;
  out.covariance = f * s.covariance * f.transpose() + process_noise(s.mean, cfg);
  symmetrize(out.covariance);
  if (out.time_since_update > 0) out.hits = 0;
  ++out.age;
  ++out.time_since_update;
  return out;
}

TrackState kalman_update(const TrackState& s, const Detection& d, const KalmanConfig& cfg, int min_hits) {
  if (!(d.box.w > 0.0) || !(d.box.h > 0.0)) {
    throw Error(ErrorCode::InvalidValue, "detection box must have positive area");
  }
  const MeasurementModel hm = measurement_model();
  const MeasurementMatrix innovation_cov = hm * s.covariance * hm.transpose() + measurement_noise(s.mean, cfg);
  const Eigen::LLT<MeasurementMatrix> llt(innovation_cov);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::SingularMatrix, "innovation covariance is not positive definite");

  // K = P H^T S^-1, solved as S K^T = H P.
  const Eigen::Matrix<double, 8, 4> gain = llt.solve(hm * s.covariance).transpose();
  const MeasurementVector innovation = to_measurement(d.box) - hm * s.mean;

  TrackState out = s;
  out.mean = s.mean + gain * innovation;
  out.covariance = (StateMatrix::Identity() - gain * hm) * s.covariance;
  symmetrize(out.covariance);
  out.mean(2) = std::max(out.mean(2), kMinExtent);
  out.mean(3) = std::max(out.mean(3), kMinExtent);
  out.time_since_update = 0;
  ++out.hits;
  if (out.hits >= min_hits && out.status == TrackStatus::Tentative) out.status = TrackStatus::Confirmed;
  return out;
}

std::vector<Detection> merge_modal_detections(std::span<const Detection> vis, std::span<const Detection> ir,
                                              double nms_threshold) {
  std::vector<Detection> all(vis.begin(), vis.end());
  all.insert(all.end(), ir.begin(), ir.end());
  const std::size_t n_vis = vis.size();
  const auto from_vis = [n_vis](std::size_t i) { return i < n_vis; };

  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return all[a].score > all[b].score; });

  std::vector<char> suppressed(all.size(), 0), kept(all.size(), 0), fused(all.size(), 0);
  for (std::size_t oi = 0; oi < order.size(); ++oi) {
    const std::size_t i = order[oi];
    if (suppressed[i]) continue;
    kept[i] = 1;
    for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
      const std::size_t j = order[oj];
      if (suppressed[j] || all[j].class_id != all[i].class_id) continue;
      if (iou(all[i].box, all[j].box) >= nms_threshold) {
        suppressed[j] = 1;
        if (from_vis(i) != from_vis(j)) fused[i] = 1;
      }
    }
  }

  std::vector<Detection> out;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (!kept[i]) continue;
    Detection d = all[i];
    if (fused[i]) d.modality = Modality::Fused;
    out.push_back(d);
  }
  return out;
}

Tracker::Tracker(TrackerConfig cfg) : cfg_(cfg) {
  if (!(cfg_.iou_threshold > 0.0 && cfg_.iou_threshold <= 1.0)) {
    throw Error(ErrorCode::InvalidValue, "association IoU threshold must be in (0,1]");
  }
  if (cfg_.max_age < 0 || cfg_.min_hits < 1) throw Error(ErrorCode::InvalidValue, "max_age >= 0 and min_hits >= 1 required");
}

std::vector<TrackOutput> Tracker::step(std::span<const Detection> dets) {
  ++frame_count_;
  for (TrackState& t : tracks_) t = kalman_predict(t, cfg_.kalman);

  std::vector<int> det_owner(dets.size(), -1);  // index into tracks_
  std::vector<char> track_matched(tracks_.size(), 0);

  // Confirmed tracks get first pick; tentative tracks compete for the rest.
  for (const TrackStatus stage : {TrackStatus::Confirmed, TrackStatus::Tentative}) {
    std::vector<std::size_t> rows, cols;
    for (std::size_t t = 0; t < tracks_.size(); ++t) {
      if (tracks_[t].status == stage) rows.push_back(t);
    }
    for (std::size_t d = 0; d < dets.size(); ++d) {
      if (det_owner[d] < 0) cols.push_back(d);
    }
    if (rows.empty() || cols.empty()) continue;
    const auto R = static_cast<Eigen::Index>(rows.size()), C = static_cast<Eigen::Index>(cols.size());
    Eigen::MatrixXd sim(R, C);
    Mask eligible(R, C);
    for (Eigen::Index r = 0; r < R; ++r) {
      const TrackState& t = tracks_[rows[static_cast<std::size_t>(r)]];
      const Box predicted = t.box();
      for (Eigen::Index c = 0; c < C; ++c) {
        const Detection& d = dets[cols[static_cast<std::size_t>(c)]];
        sim(r, c) = iou(predicted, d.box);
        eligible(r, c) = d.class_id == t.class_id && sim(r, c) >= cfg_.iou_threshold;
      }
    }
    for (const auto& [r, c] : max_weight_matching(sim, eligible).pairs) {
      const std::size_t t = rows[static_cast<std::size_t>(r)];
      det_owner[cols[static_cast<std::size_t>(c)]] = static_cast<int>(t);
      track_matched[t] = 1;
    }
  }

  std::vector<std::pair<int, std::size_t>> updated;  // (track index, detection index)
  for (std::size_t d = 0; d < dets.size(); ++d) {
    if (det_owner[d] < 0) continue;
    TrackState& t = tracks_[static_cast<std::size_t>(det_owner[d])];
    t = kalman_update(t, dets[d], cfg_.kalman, cfg_.min_hits);
    updated.emplace_back(det_owner[d], d);
  }

  for (std::size_t d = 0; d < dets.size(); ++d) {
    if (det_owner[d] >= 0 || dets[d].score < cfg_.score_birth) continue;
    if (!(dets[d].box.w > 0.0) || !(dets[d].box.h > 0.0)) continue;
    tracks_.push_back(initiate_track(next_id_++, dets[d], cfg_.kalman, cfg_.min_hits));
    updated.emplace_back(static_cast<int>(tracks_.size() - 1), d);
  }

  std::vector<TrackOutput> out;
  for (const auto& [t, d] : updated) {
    const TrackState& s = tracks_[static_cast<std::size_t>(t)];
    if (s.status == TrackStatus::Confirmed || frame_count_ <= cfg_.min_hits) {
      out.push_back(TrackOutput{s.id, dets[d].box, s.class_id});
    }
  }
  std::sort(out.begin(), out.end(), [](const TrackOutput& a, const TrackOutput& b) { return a.id < b.id; });

  for (TrackState& t : tracks_) {
    if (t.time_since_update > cfg_.max_age) t.status = TrackStatus::Dead;
  }
  std::erase_if(tracks_, [](const TrackState& t) { return t.status == TrackStatus::Dead; });
  return out;
}

TrajectorySet track_sequence(std::span<const std::vector<Detection>> per_frame, const TrackerConfig& cfg) {
  Tracker tracker(cfg);
  TrajectorySet out;
  for (std::size_t f = 0; f < per_frame.size(); ++f) {
    for (const TrackOutput& o : tracker.step(per_frame[f])) {
      out.add(o.id, static_cast<int>(f) + 1, o.box, o.class_id);
    }
  }
  return out;
}

std::vector<std::vector<Detection>> group_by_frame(std::span<const Detection> dets, int n_frames) {
  std::vector<std::vector<Detection>> out(static_cast<std::size_t>(std::max(n_frames, 0)));
  for (const Detection& d : dets) {
    if (d.frame >= 1 && d.frame <= n_frames) out[static_cast<std::size_t>(d.frame - 1)].push_back(d);
  }
  return out;
}

}  // namespace vtmot
