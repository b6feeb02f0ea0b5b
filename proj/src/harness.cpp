// SPDX-License-Identifier: Apache-2.0
#include "vtmot/harness.hpp"

#include "vtmot/random.hpp"

#include <algorithm>
#include <cmath>

namespace vtmot {

namespace {

constexpr int kMaxPlacementTries = 100;
constexpr double kRounding = 0.005;  // half of the 1/100 px grid

double round2(double v) { return std::round(v * 100.0) / 100.0; }

struct TrackPlan {
  int id = 0;
  int class_id = 1;
  double w = 0.0, h = 0.0;
  double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;

  Box at(int frame, int n_frames) const {
    const double t = n_frames > 1 ? static_cast<double>(frame - 1) / (n_frames - 1) : 0.0;
    return Box{round2(x0 + (x1 - x0) * t), round2(y0 + (y1 - y0) * t), w, h};
  }
};

std::vector<TrackPlan> plan_tracks(const ScenarioSpec& spec, Rng& rng) {
  const double W = spec.width, H = spec.height;
  std::vector<TrackPlan> plans;
  double pair_cy = 0.0;
  for (int k = 0; k < spec.n_tracks; ++k) {
    TrackPlan p;
    p.id = k + 1;
    p.class_id = rng.bernoulli(0.5) ? 2 : 1;
    p.w = round2(rng.uniform(24.0, 64.0));
    p.h = round2(rng.uniform(48.0, 128.0));
    switch (spec.motion) {
      case Motion::Linear:
        p.x0 = rng.uniform(0.0, W - p.w);
        p.y0 = rng.uniform(0.0, H - p.h);
        p.x1 = rng.uniform(0.0, W - p.w);
        p.y1 = rng.uniform(0.0, H - p.h);
        break;
      case Motion::Crossing: {
        // Pairs share a horizontal centre line and travel in opposite directions.
        if (k % 2 == 0) pair_cy = rng.uniform(64.0, H - 64.0);
        const double left = rng.uniform(0.0, W / 4.0);
        const double right = rng.uniform(0.75 * W - p.w, W - p.w);
        p.x0 = k % 2 == 0 ? left : right;
        p.x1 = k % 2 == 0 ? right : left;
        p.y0 = p.y1 = pair_cy - p.h / 2.0;
        break;
      }
      case Motion::Stationary:
        p.x0 = p.x1 = rng.uniform(0.0, W - p.w);
        p.y0 = p.y1 = rng.uniform(0.0, H - p.h);
        break;
    }
    plans.push_back(p);
  }
  return plans;
}

}  // namespace

std::string_view to_string(Motion m) {
  switch (m) {
    case Motion::Linear: return "linear";
    case Motion::Crossing: return "crossing";
    case Motion::Stationary: return "stationary";
  }
  return "linear";
}

Motion parse_motion(std::string_view s) {
  for (Motion m : {Motion::Linear, Motion::Crossing, Motion::Stationary}) {
    if (s == to_string(m)) return m;
  }
  throw Error(ErrorCode::InvalidValue, "unknown motion model '" + std::string(s) + "'");
}

void ScenarioSpec::validate() const {
  const auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidValue, "scenario: " + what); };
  if (name.empty()) fail("name must be non-empty");
  if (n_tracks < 1) fail("n_tracks must be positive");
  if (n_frames < 1) fail("n_frames must be positive");
  if (width < 256 || height < 256) fail("image size must be at least 256x256");
  if (!(frame_rate > 0.0)) fail("frame rate must be positive");
  if (!(drop_rate >= 0.0 && drop_rate <= 1.0)) fail("drop_rate must be in [0,1]");
  if (!(jitter_px >= 0.0) || !std::isfinite(jitter_px)) fail("jitter_px must be non-negative");
  if (!(fp_rate >= 0.0) || !std::isfinite(fp_rate)) fail("fp_rate must be non-negative");
}

std::vector<std::vector<Detection>> SyntheticSequence::detections_by_frame() const {
  std::vector<std::vector<Detection>> out(frames.size());
  for (std::size_t f = 0; f < frames.size(); ++f) {
    for (const LabeledDetection& d : frames[f]) out[f].push_back(d.det);
  }
  return out;
}

std::vector<Detection> SyntheticSequence::all_detections() const {
  std::vector<Detection> out;
  for (const auto& frame : frames) {
    for (const LabeledDetection& d : frame) out.push_back(d.det);
  }
  return out;
}

TrajectorySet SyntheticSequence::oracle_tracks() const {
  int next_false_id = 1;
  for (const AnnotationRecord& r : gt.records()) next_false_id = std::max(next_false_id, r.track_id + 1);
  TrajectorySet out;
  for (const auto& frame : frames) {
    for (const LabeledDetection& d : frame) {
      const int id = d.source_id > 0 ? d.source_id : next_false_id++;
      out.add(id, d.det.frame, d.det.box, d.det.class_id);
    }
  }
  return out;
}

SyntheticSequence generate_synthetic_sequence(const ScenarioSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const std::vector<TrackPlan> plans = plan_tracks(spec, rng);

  SyntheticSequence seq;
  seq.meta.name = spec.name;
  seq.meta.frame_rate = spec.frame_rate;
  seq.meta.seq_length = spec.n_frames;
  seq.meta.visible_width = seq.meta.infrared_width = spec.width;
  seq.meta.visible_height = seq.meta.infrared_height = spec.height;
  seq.meta.platform = spec.platform;

  std::vector<AnnotationRecord> records;
  seq.frames.resize(static_cast<std::size_t>(spec.n_frames));
  const double fp_whole = std::floor(spec.fp_rate);
  const double fp_frac = spec.fp_rate - fp_whole;

  for (int f = 1; f <= spec.n_frames; ++f) {
    auto& out = seq.frames[static_cast<std::size_t>(f - 1)];
    std::vector<Box> truth;
    for (const TrackPlan& p : plans) {
      const Box b = p.at(f, spec.n_frames);
      truth.push_back(b);
      records.push_back(AnnotationRecord{f, p.id, b, 1, p.class_id, 1});
      if (rng.bernoulli(spec.drop_rate)) {
        ++seq.n_dropped;
        continue;
      }
      Box d = b;
      if (spec.jitter_px > 0.0) {
        const double j = spec.jitter_px;
        d.x = round2(b.x + rng.uniform(-j, j));
        d.y = round2(b.y + rng.uniform(-j, j));
        d.w = std::max(1.0, round2(b.w + rng.uniform(-j, j)));
        d.h = std::max(1.0, round2(b.h + rng.uniform(-j, j)));
      }
      const double score = round2(rng.uniform(0.5, 1.0));
      out.push_back(LabeledDetection{Detection{f, d, score, p.class_id, Modality::Visible}, p.id});
    }

    const int n_fp = static_cast<int>(fp_whole) + (rng.bernoulli(fp_frac) ? 1 : 0);
    for (int i = 0; i < n_fp; ++i) {
      for (int attempt = 0; attempt < kMaxPlacementTries; ++attempt) {
        const double w = round2(rng.uniform(16.0, 48.0));
        const double h = round2(rng.uniform(16.0, 48.0));
        const Box b{round2(rng.uniform(0.0, spec.width - w)), round2(rng.uniform(0.0, spec.height - h)), w, h};
        if (std::any_of(truth.begin(), truth.end(), [&](const Box& t) { return iou(t, b) > 0.0; })) continue;
        const double score = round2(rng.uniform(0.4, 1.0));
        out.push_back(LabeledDetection{Detection{f, b, score, 1 + static_cast<int>(rng.bernoulli(0.5)), Modality::Visible}, 0});
        ++seq.n_false;
        break;
      }
    }
  }
  seq.gt = AnnotationSet(std::move(records));
  return seq;
}

double jitter_iou_bound(double w, double h, double j) {
  const double inter = std::max(0.0, w - 2.0 * j) * std::max(0.0, h - 2.0 * j);
  const double uni = w * h + (w + j) * (h + j) - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

ExpectedCounts expected_counts(const ScenarioSpec& spec, const SyntheticSequence& seq) {
  if (spec.jitter_px > 0.0 && !seq.gt.empty()) {
    double w = seq.gt.records().front().box.w, h = seq.gt.records().front().box.h;
    for (const AnnotationRecord& r : seq.gt.records()) {
      w = std::min(w, r.box.w);
      h = std::min(h, r.box.h);
    }
    const double bound = jitter_iou_bound(w, h, spec.jitter_px + kRounding);
    if (bound < 0.5) {
      throw Error(ErrorCode::InvalidValue, "jitter " + std::to_string(spec.jitter_px) +
                                               " px cannot guarantee IoU >= 0.5 for a " + std::to_string(w) + "x" +
                                               std::to_string(h) + " box");
    }
  }
  return ExpectedCounts{seq.gt.size(), seq.n_dropped, seq.n_false};
}

std::filesystem::path write_synthetic_sequence(const std::filesystem::path& root, const SyntheticSequence& seq) {
  const std::filesystem::path dir = root / seq.meta.name;
  const std::vector<Detection> dets = seq.all_detections();
  write_sequence(dir, seq.meta, seq.gt, dets);
  return dir;
}

}  // namespace vtmot
