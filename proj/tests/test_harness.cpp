// SPDX-License-Identifier: Apache-2.0
#include "vtmot/error.hpp"
#include "vtmot/harness.hpp"
#include "vtmot/metrics.hpp"
#include "vtmot/random.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <algorithm>
#include <set>

using namespace vtmot;

namespace {

ClearReport score_oracle(const SyntheticSequence& seq) {
  const int n = seq.meta.seq_length;
  const auto gt = to_frames(to_trajectories(seq.gt, true), n);
  const auto pred = to_frames(seq.oracle_tracks(), n);
  return clear_metrics(gt, pred);
}

}  // namespace

TEST_CASE("generation is deterministic per seed") {
  ScenarioSpec spec;
  spec.drop_rate = 0.2;
  spec.jitter_px = 1.5;
  spec.fp_rate = 0.7;
  spec.seed = 5;
  const SyntheticSequence a = generate_synthetic_sequence(spec);
  const SyntheticSequence b = generate_synthetic_sequence(spec);
  CHECK(a.gt == b.gt);
  CHECK(a.all_detections() == b.all_detections());
  spec.seed = 6;
  CHECK_FALSE(generate_synthetic_sequence(spec).all_detections() == a.all_detections());
}

TEST_CASE("clean scenario bookkeeping") {
  for (Motion m : {Motion::Linear, Motion::Crossing, Motion::Stationary}) {
    ScenarioSpec spec;
    spec.motion = m;
    spec.n_tracks = 4;
    spec.n_frames = 30;
    const SyntheticSequence seq = generate_synthetic_sequence(spec);
    CHECK(seq.meta.seq_length == 30);
    CHECK(seq.frames.size() == 30);
    CHECK(seq.gt.size() == 120);
    CHECK(seq.all_detections().size() == 120);
    CHECK(seq.n_dropped == 0);
    CHECK(seq.n_false == 0);
    for (const auto& r : seq.gt.records()) {
      CHECK(r.box.x >= 0.0);
      CHECK(r.box.y >= 0.0);
      CHECK(r.box.x + r.box.w <= spec.width + 1e-9);
      CHECK(r.box.y + r.box.h <= spec.height + 1e-9);
    }
    const ClearReport rep = score_oracle(seq);
    CHECK(rep.mota == 1.0);
    CHECK(rep.idsw == 0);
  }
}

TEST_CASE("drop rate 1 yields no detections") {
  ScenarioSpec spec;
  spec.drop_rate = 1.0;
  const SyntheticSequence seq = generate_synthetic_sequence(spec);
  CHECK(seq.all_detections().empty());
  CHECK(seq.n_dropped == seq.gt.size());
  const ExpectedCounts e = expected_counts(spec, seq);
  CHECK(e.fn == e.n_gt);
  CHECK(e.fp == 0);
}

TEST_CASE("expected counts agree with the CLEAR evaluation") {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    for (double drop : {0.0, 0.1, 0.3}) {
      ScenarioSpec spec;
      spec.seed = seed;
      spec.drop_rate = drop;
      spec.fp_rate = 0.5;
      spec.jitter_px = 1.0;
      spec.n_tracks = 5;
      const SyntheticSequence seq = generate_synthetic_sequence(spec);
      const ExpectedCounts e = expected_counts(spec, seq);
      const ClearReport rep = score_oracle(seq);
      CHECK(e.n_gt == rep.n_gt);
      CHECK(e.fn == rep.fn);
      CHECK(e.fp == rep.fp);
      CHECK(e.fn == seq.n_dropped);
      CHECK(e.fp == seq.n_false);
      CHECK(rep.idsw == 0);
    }
  }
}

TEST_CASE("false positives avoid ground truth and carry source 0") {
  ScenarioSpec spec;
  spec.fp_rate = 2.5;
  spec.seed = 3;
  const SyntheticSequence seq = generate_synthetic_sequence(spec);
  std::size_t n_false = 0;
  for (std::size_t f = 0; f < seq.frames.size(); ++f) {
    const auto gt = seq.gt.frame(static_cast<int>(f) + 1);
    const auto& frame = seq.frames[f];
    // floor(rate) guaranteed, plus at most one
    CHECK(std::count_if(frame.begin(), frame.end(), [](const auto& d) { return d.source_id == 0; }) >= 2);
    for (const LabeledDetection& d : frame) {
      CHECK(d.det.frame == static_cast<int>(f) + 1);
      if (d.source_id != 0) continue;
      ++n_false;
      CHECK(d.det.score >= 0.4);
      for (const auto& r : gt) CHECK(iou(r.box, d.det.box) < 0.5);
    }
  }
  CHECK(n_false == seq.n_false);
  // the mean number of false boxes tracks the rate
  CHECK(static_cast<double>(n_false) / spec.n_frames == doctest::Approx(2.5).epsilon(0.15));
}

TEST_CASE("oracle tracks keep identities") {
  ScenarioSpec spec;
  spec.fp_rate = 1.0;
  const SyntheticSequence seq = generate_synthetic_sequence(spec);
  const TrajectorySet t = seq.oracle_tracks();
  CHECK(t.box_count() == seq.all_detections().size());
  std::set<int> gt_ids;
  for (const auto& r : seq.gt.records()) gt_ids.insert(r.track_id);
  std::size_t fresh = 0;
  for (const auto& [id, tr] : t.tracks) {
    if (!gt_ids.count(id)) fresh += tr.points.size();
  }
  CHECK(fresh == seq.n_false);
}

TEST_CASE("jitter bound") {
  CHECK(jitter_iou_bound(40, 40, 0.0) == 1.0);
  CHECK(jitter_iou_bound(40, 40, 2.0) > jitter_iou_bound(40, 40, 4.0));
  CHECK(jitter_iou_bound(80, 80, 2.0) > jitter_iou_bound(40, 40, 2.0));
  Rng rng(4);
  for (int i = 0; i < 2000; ++i) {
    const double w = rng.uniform(10, 60), h = rng.uniform(10, 60), j = rng.uniform(0, 4);
    const Box a{100, 100, w, h};
    const Box b{100 + rng.uniform(-j, j), 100 + rng.uniform(-j, j), w + rng.uniform(-j, j), h + rng.uniform(-j, j)};
    CHECK(iou(a, b) >= jitter_iou_bound(w, h, j) - 1e-12);
  }
}

TEST_CASE("too much jitter is refused") {
  ScenarioSpec spec;
  spec.jitter_px = 20.0;
  const SyntheticSequence seq = generate_synthetic_sequence(spec);
  CHECK_THROWS_AS(expected_counts(spec, seq), Error);
}

TEST_CASE("spec validation") {
  ScenarioSpec spec;
  spec.drop_rate = 1.5;
  CHECK_THROWS_AS(spec.validate(), Error);
  spec = ScenarioSpec{};
  spec.n_frames = 0;
  CHECK_THROWS_AS(generate_synthetic_sequence(spec), Error);
  spec = ScenarioSpec{};
  spec.fp_rate = -1.0;
  CHECK_THROWS_AS(spec.validate(), Error);
  CHECK(parse_motion(to_string(Motion::Crossing)) == Motion::Crossing);
  CHECK_THROWS_AS(parse_motion("spiral"), Error);
}

TEST_CASE("written sequences validate and load back") {
  testing::TempDir dir("harness");
  ScenarioSpec spec;
  spec.name = "syn-a";
  spec.fp_rate = 0.3;
  spec.platform = Platform::UAV;
  const SyntheticSequence seq = generate_synthetic_sequence(spec);
  const auto path = write_synthetic_sequence(dir.path(), seq);
  CHECK(path == dir.path() / "syn-a");
  CHECK(validate_sequence(scan_sequence(path)).is_valid());
  const SequenceAnnotations back = load_sequence(path);
  CHECK(back.gt == seq.gt);
  CHECK(back.meta.platform == Platform::UAV);
  const auto dets = parse_detections(read_text_file(path / "det" / "det.txt"));
  CHECK(dets.size() == seq.all_detections().size());
}
