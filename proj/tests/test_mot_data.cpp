// SPDX-License-Identifier: Apache-2.0
#include "vtmot/error.hpp"
#include "vtmot/harness.hpp"
#include "vtmot/mot_data.hpp"
#include "vtmot/random.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace vtmot;
namespace fs = std::filesystem;

namespace {

const char* kIni =
    "[Sequence]\n"
    "name=seq01\n"
    "imDir=visible\n"
    "frameRate=25\n"
    "seqLength=750\n"
    "imWidth=640\n"
    "imHeight=480\n";

SequenceMeta meta_with_length(int n) {
  SequenceMeta m;
  m.name = "m";
  m.seq_length = n;
  m.visible_width = m.infrared_width = 640;
  m.visible_height = m.infrared_height = 480;
  return m;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::Usage;
}

}  // namespace

TEST_CASE("seqinfo parsing") {
  const SequenceMeta m = parse_seqinfo(kIni);
  CHECK(m.name == "seq01");
  CHECK(m.frame_rate == 25.0);
  CHECK(m.seq_length == 750);
  CHECK(m.visible_width == 640);
  CHECK(m.infrared_height == 480);  // defaults to the visible size
  CHECK(m.platform == Platform::Unknown);

  CHECK(code_of([] { parse_seqinfo("[Sequence]\nname=a\nframeRate=25\nimWidth=1\nimHeight=1\n"); }) ==
        ErrorCode::MissingKey);
  CHECK(code_of([] { parse_seqinfo("[Sequence]\nname=a\nframeRate=25\nseqLength=3\nimWidth=0\nimHeight=1\n"); }) ==
        ErrorCode::InvalidValue);
}

TEST_CASE("seqinfo round trip with extensions") {
  SequenceMeta m = meta_with_length(12);
  m.infrared_width = 320;
  m.infrared_height = 256;
  m.frame_rate = 29.97;
  m.platform = Platform::UAV;
  m.image_ext = ".png";
  CHECK(parse_seqinfo(serialize_seqinfo(m)) == m);
}

TEST_CASE("annotation line maps columns") {
  const AnnotationSet s = parse_annotations("1,1,100,200,50,80,1,1,1\n", meta_with_length(10));
  REQUIRE(s.size() == 1);
  const AnnotationRecord& r = s.records().front();
  CHECK(r.frame == 1);
  CHECK(r.track_id == 1);
  CHECK(r.box == Box{100, 200, 50, 80});
  CHECK(r.valid == 1);
  CHECK(r.class_id == 1);
  CHECK(r.reserved == 1);
}

TEST_CASE("annotation errors") {
  const SequenceMeta m = meta_with_length(750);
  CHECK(code_of([&] { parse_annotations("1,1,100,200,50,80,1,1\n", m); }) == ErrorCode::ColumnCount);
  CHECK(code_of([&] { parse_annotations("1,1,10,10,5,5,1,3,1\n", m); }) == ErrorCode::InvalidClass);
  CHECK(code_of([&] { parse_annotations("800,1,10,10,5,5,1,1,1\n", m); }) == ErrorCode::FrameOutOfRange);
  CHECK(code_of([&] { parse_annotations("0,1,10,10,5,5,1,1,1\n", m); }) == ErrorCode::InvalidValue);
  CHECK(code_of([&] { parse_annotations("1,1,10,10,5,5,1,1,1\n1,1,20,20,5,5,1,1,1\n", m); }) ==
        ErrorCode::DuplicateEntry);
  CHECK(code_of([&] { parse_annotations("1,1,abc,10,5,5,1,1,1\n", m); }) == ErrorCode::InvalidValue);
}

TEST_CASE("lenient scan keeps good records and reports the rest") {
  const AnnotationScan scan =
      scan_annotations("1,1,1,1,5,5,1,1,1\n2,1,1,1,5,5,1,7,1\n3,1,1,1,5,5\n2,2,1,1,5,5,1,2,1\n", meta_with_length(5));
  CHECK(scan.records.size() == 2);
  CHECK(scan.issues.size() == 2);
}

TEST_CASE("serialization is canonical") {
  const SequenceMeta m = meta_with_length(10);
  CHECK(serialize_annotations(AnnotationSet{}).empty());
  CHECK(serialize_annotations(parse_annotations("1,1,100,200,50,80,1,1,1\n", m)) == "1,1,100,200,50,80,1,1,1\n");
  CHECK(serialize_annotations(parse_annotations("1, 2, 10.50, 3.0, 4, 5, 0, 2, 1", m)) == "1,2,10.5,3,4,5,0,2,1\n");
  // records come out sorted by frame then id
  CHECK(serialize_annotations(parse_annotations("2,1,1,1,1,1,1,1,1\n1,2,1,1,1,1,1,1,1\n1,1,1,1,1,1,1,1,1\n", m)) ==
        "1,1,1,1,1,1,1,1,1\n1,2,1,1,1,1,1,1,1\n2,1,1,1,1,1,1,1,1\n");
}

TEST_CASE("parse and serialize round trip on random sets") {
  Rng rng(21);
  const SequenceMeta m = meta_with_length(40);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<AnnotationRecord> recs;
    for (int id = 1; id <= 5; ++id) {
      for (int f = 1; f <= 40; ++f) {
        if (!rng.bernoulli(0.5)) continue;
        recs.push_back({f, id,
                        Box{rng.uniform(0, 600), rng.uniform(0, 400), rng.uniform(1, 80), rng.uniform(1, 80)},
                        static_cast<int>(rng.integer(0, 1)), static_cast<int>(rng.integer(1, 2)), 1});
      }
    }
    const AnnotationSet s(recs);
    const std::string text = serialize_annotations(s);
    const AnnotationSet back = parse_annotations(text, m);
    CHECK(back.records() == s.records());
    CHECK(serialize_annotations(back) == text);
  }
}

TEST_CASE("collapse_classes") {
  const SequenceMeta m = meta_with_length(10);
  const AnnotationSet s = parse_annotations("1,1,1,1,5,5,1,2,1\n1,2,1,1,5,5,1,1,1\n2,1,1,1,5,5,0,2,1\n", m);
  const AnnotationSet c = collapse_classes(s);
  REQUIRE(c.size() == s.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    CHECK(c.records()[i].class_id == 1);
    CHECK(c.records()[i].track_id == s.records()[i].track_id);
    CHECK(c.records()[i].valid == s.records()[i].valid);
  }
  CHECK(collapse_classes(c).records() == c.records());
}

TEST_CASE("detections round trip") {
  const std::vector<Detection> dets{{1, Box{1, 2, 3, 4}, 0.9, 1, Modality::Visible},
                                    {1, Box{5.5, 6, 7, 8}, 0.25, 2, Modality::Thermal},
                                    {2, Box{9, 10, 11, 12}, 1, 1, Modality::Fused}};
  const std::string text = serialize_detections(dets);
  CHECK(text == "1,1,2,3,4,0.9,1,V\n1,5.5,6,7,8,0.25,2,T\n2,9,10,11,12,1,1,F\n");
  CHECK(parse_detections(text) == dets);
  CHECK_THROWS_AS(parse_detections("1,1,2,3,4,0.9,1,X\n"), Error);
  CHECK_THROWS_AS(parse_detections("1,1,2,3,4,1.5,1,V\n"), Error);
}

TEST_CASE("trajectory conversion") {
  const SequenceMeta m = meta_with_length(10);
  const AnnotationSet s = parse_annotations("1,1,1,1,5,5,1,2,1\n2,1,2,1,5,5,0,2,1\n1,3,1,1,5,5,1,1,1\n", m);
  const TrajectorySet all = to_trajectories(s, false);
  const TrajectorySet valid = to_trajectories(s, true);
  CHECK(all.box_count() == 3);
  CHECK(valid.box_count() == 2);
  CHECK(all.tracks.at(1).class_id == 2);
  CHECK(to_annotations(all).size() == 3);
}

TEST_CASE("scale bins are right-closed") {
  CHECK(scale_bin(0.0) == 0);
  CHECK(scale_bin(-1.0) == 0);
  CHECK(scale_bin(1.0) == 1);
  CHECK(scale_bin(11.0 * 11.0) == 1);
  CHECK(scale_bin(22.0 * 22.0) == 2);
  CHECK(scale_bin(30.0 * 30.0) == 3);
  CHECK(scale_bin(32.0 * 32.0) == 3);
  CHECK(scale_bin(32.0 * 32.0 + 1e-9) == 4);
  CHECK(scale_bin(64.0 * 64.0) == 4);
  CHECK(scale_bin(96.0 * 96.0) == 5);
  CHECK(scale_bin(96.0 * 96.0 + 1.0) == 6);
}

TEST_CASE("statistics from counts") {
  const DatasetStats s = stats_from_counts(582, 401068, 0, 3994777, 25.0);
  REQUIRE(s.density);
  REQUIRE(s.avg_length_s);
  CHECK(*s.density == doctest::Approx(3994777.0 / 401068.0));
  CHECK(*s.density == doctest::Approx(9.96).epsilon(0.001));
  CHECK(*s.avg_length_s == doctest::Approx(401068.0 / 25.0 / 582.0));
  CHECK(std::abs(*s.avg_length_s - 27.57) <= 0.01);

  const DatasetStats empty = stats_from_counts(0, 0, 0, 0, 25.0);
  CHECK_FALSE(empty.density);
  CHECK_FALSE(empty.avg_length_s);
}

TEST_CASE("dataset statistics") {
  SequenceAnnotations a{meta_with_length(10), parse_annotations("1,1,0,0,30,30,1,1,1\n2,1,0,0,30,30,1,1,1\n1,2,0,0,10,10,1,2,1\n", meta_with_length(10))};
  SequenceAnnotations b{meta_with_length(30), parse_annotations("5,1,0,0,100,100,1,2,1\n", meta_with_length(30))};
  a.meta.frame_rate = 10.0;
  const std::vector<SequenceAnnotations> seqs{a, b};
  const DatasetStats s = dataset_stats(seqs);
  CHECK(s.n_videos == 2);
  CHECK(s.n_frames == 40);
  CHECK(s.n_tracks == 3);
  CHECK(s.n_boxes == 4);
  CHECK(s.total_duration_s == doctest::Approx(1.0 + 30.0 / 25.0));
  CHECK(*s.density == doctest::Approx(0.1));
  CHECK(s.scale_histogram == std::array<std::size_t, kScaleBins>{1, 0, 2, 0, 0, 1});
  CHECK(s.class_counts.at(1) == ClassCount{1, 2});
  CHECK(s.class_counts.at(2) == ClassCount{2, 2});
  std::size_t total = 0;
  for (std::size_t n : s.scale_histogram) total += n;
  CHECK(total == s.n_boxes);

  const DatasetStats none = dataset_stats({});
  CHECK(none.n_frames == 0);
  CHECK_FALSE(none.density);
}

TEST_CASE("validator on disk") {
  testing::TempDir tmp("validate");
  ScenarioSpec spec;
  spec.name = "seq";
  spec.n_frames = 20;
  const SyntheticSequence seq = generate_synthetic_sequence(spec);
  const fs::path dir = write_synthetic_sequence(tmp.path(), seq);
  CHECK(validate_sequence(scan_sequence(dir)).is_valid());

  SUBCASE("frame count mismatch") {
    fs::remove(dir / "infrared" / frame_filename(20, ".jpg"));
    const ValidationReport r = validate_sequence(scan_sequence(dir));
    CHECK_FALSE(r.is_valid());
    CHECK(r.has(ErrorCode::FrameCountMismatch));
  }
  SUBCASE("gt frame beyond seqLength") {
    std::ofstream(dir / "gt" / "gt.txt", std::ios::app) << "800,1,1,1,5,5,1,1,1\n";
    const ValidationReport r = validate_sequence(scan_sequence(dir));
    CHECK(r.has(ErrorCode::FrameOutOfRange));
  }
  SUBCASE("bad class") {
    std::ofstream(dir / "gt" / "gt.txt", std::ios::app) << "3,99,1,1,5,5,1,3,1\n";
    CHECK(validate_sequence(scan_sequence(dir)).has(ErrorCode::InvalidClass));
  }
  SUBCASE("missing seqinfo") {
    fs::remove(dir / "seqinfo.ini");
    CHECK_FALSE(validate_sequence(scan_sequence(dir)).is_valid());
  }
  SUBCASE("load and list") {
    const SequenceAnnotations loaded = load_sequence(dir);
    CHECK(loaded.meta == seq.meta);
    CHECK(loaded.gt.records() == seq.gt.records());
    CHECK(list_sequences(tmp.path()) == std::vector<fs::path>{dir});
  }
}

TEST_CASE("atomic writes leave no temporaries") {
  testing::TempDir tmp("atomic");
  const fs::path file = tmp.path() / "sub" / "out.txt";
  write_text_atomic(file, "hello\n");
  write_text_atomic(file, "world\n");
  CHECK(read_text_file(file) == "world\n");
  std::size_t n = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(file.parent_path())) ++n;
  CHECK(n == 1);
}
