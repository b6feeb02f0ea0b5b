// SPDX-License-Identifier: Apache-2.0
//
// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails. Tolerances are fixed here and echoed in the output.
#include "vtmot/assignment.hpp"
#include "vtmot/cli.hpp"
#include "vtmot/error.hpp"
#include "vtmot/harness.hpp"
#include "vtmot/metrics.hpp"
#include "vtmot/mot_data.hpp"
#include "vtmot/pfm/core.hpp"
#include "vtmot/pfm/gradcheck.hpp"
#include "vtmot/random.hpp"
#include "vtmot/tracker.hpp"

#include "test_util.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

using namespace vtmot;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void fail(const std::string& why) {
    if (pass) detail = why;
    pass = false;
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------------------

Outcome assignment_oracle() {
  Outcome o;
  Rng rng(2024);
  const auto t0 = Clock::now();
  std::size_t n_cases = 0;
  for (int n = 2; n <= 7; ++n) {
    std::vector<int> perm(static_cast<std::size_t>(n));
    for (int trial = 0; trial < 500; ++trial) {
      Eigen::MatrixXd c(n, n);
      for (int r = 0; r < n; ++r) {
        for (int k = 0; k < n; ++k) c(r, k) = static_cast<double>(rng.integer(0, 99));
      }
      std::iota(perm.begin(), perm.end(), 0);
      double best = 1e300;
      do {
        double s = 0.0;
        for (int r = 0; r < n; ++r) s += c(r, perm[static_cast<std::size_t>(r)]);
        best = std::min(best, s);
      } while (std::next_permutation(perm.begin(), perm.end()));
      const Assignment a = hungarian(c);
      if (a.total_cost != best || a.pairs.size() != static_cast<std::size_t>(n)) {
        o.fail(fmt("n=%d trial %d: hungarian %.0f, brute force %.0f", n, trial, a.total_cost, best));
      }
      ++n_cases;
    }
  }
  const double secs = seconds_since(t0);
  if (secs >= 10.0) o.fail(fmt("runtime %.2f s >= 10 s", secs));
  if (o.pass) o.detail = fmt("%zu matrices, n=2..7, exact; %.2f s (< 10 s)", n_cases, secs);
  return o;
}

// ---------------------------------------------------------------------------

TrajectorySet line_track(int id, int first, int last, double x0) {
  TrajectorySet t;
  for (int f = first; f <= last; ++f) t.add(id, f, Box{x0, 10.0, 20.0, 40.0});
  return t;
}

TrajectorySet merge(std::initializer_list<TrajectorySet> parts) {
  TrajectorySet out;
  for (const TrajectorySet& p : parts) {
    for (const auto& [id, tr] : p.tracks) {
      for (const TrajectoryPoint& pt : tr.points) out.add(id, pt.frame, pt.box, tr.class_id);
    }
  }
  return out;
}

Outcome metrics_formulas() {
  Outcome o;
  const auto check = [&](bool ok, const std::string& what) {
    if (!ok) o.fail(what);
  };

  // perfect tracking
  const TrajectorySet gt2 = merge({line_track(1, 1, 10, 0), line_track(2, 1, 10, 300)});
  const ClearReport perfect = clear_metrics(to_frames(gt2, 10), to_frames(gt2, 10));
  const HotaReport hp = hota(gt2, gt2);
  check(perfect.mota == 1.0 && perfect.motp == 1.0 && idf1(gt2, gt2).idf1 == 1.0 && hp.hota == 1.0,
        "perfect tracking is not exactly 1");

  // 10 gt boxes, 2 misses, 1 false positive, 1 switch
  const TrajectorySet gt = line_track(1, 1, 10, 0);
  TrajectorySet pred = merge({line_track(1, 1, 4, 0), line_track(2, 5, 8, 0)});
  pred.add(3, 1, Box{500, 400, 20, 40});
  const ClearReport c = clear_metrics(to_frames(gt, 10), to_frames(pred, 10));
  check(c.n_gt == 10 && c.fn == 2 && c.fp == 1 && c.idsw == 1, "MOTA scenario counts");
  check(std::abs(c.mota - 0.6) <= 1e-12, fmt("MOTA %.15f, expected 0.6", c.mota));

  // 5 of 10 frames covered
  const double id = idf1(gt, line_track(7, 1, 5, 0)).idf1;
  check(std::abs(id - 0.6667) <= 1e-4, fmt("IDF1 %.6f, expected 0.6667", id));

  // one detection at IoU 0.6
  TrajectorySet g1, p1;
  g1.add(1, 1, Box{0, 0, 10, 10});
  p1.add(1, 1, Box{0, 0, 10, 6});
  const double h06 = hota(g1, p1).hota;
  check(std::abs(h06 - 12.0 / 19.0) <= 1e-12, fmt("HOTA %.15f, expected 12/19", h06));

  // split track
  const HotaReport hs = hota(gt, merge({line_track(1, 1, 5, 0), line_track(2, 6, 10, 0)}));
  double worst = 0.0;
  for (const HotaAlpha& a : hs.per_alpha) worst = std::max(worst, std::abs(a.hota - std::sqrt(0.5)));
  check(worst <= 1e-12, fmt("split track HOTA_alpha off by %.3e", worst));

  if (o.pass) {
    o.detail = fmt("perfect=1 exactly; MOTA=%.3f; IDF1=%.4f; HOTA=12/19 (err %.1e); split sqrt(0.5) (err %.1e)", c.mota,
                   id, std::abs(h06 - 12.0 / 19.0), worst);
  }
  return o;
}

// ---------------------------------------------------------------------------

TrajectorySet random_scenario(Rng& rng, int n_frames, int n_tracks, double keep) {
  TrajectorySet t;
  for (int id = 1; id <= n_tracks; ++id) {
    const double x0 = rng.uniform(0, 400), y0 = rng.uniform(0, 300);
    const double vx = rng.uniform(-4, 4), vy = rng.uniform(-4, 4);
    for (int f = 1; f <= n_frames; ++f) {
      if (!rng.bernoulli(keep)) continue;
      t.add(id, f, Box{x0 + vx * f + rng.uniform(-4, 4), y0 + vy * f + rng.uniform(-4, 4), 30, 60});
    }
  }
  return t;
}

Outcome hota_identity() {
  Outcome o;
  Rng rng(77);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const int n_frames = static_cast<int>(rng.integer(5, 30));
    const TrajectorySet gt = random_scenario(rng, n_frames, static_cast<int>(rng.integer(1, 6)), 0.85);
    TrajectorySet pred = random_scenario(rng, n_frames, static_cast<int>(rng.integer(0, 4)), 0.85);
    // reuse some ground-truth boxes with shifted ids so matches exist
    for (const auto& [id, tr] : gt.tracks) {
      for (const TrajectoryPoint& p : tr.points) {
        if (!rng.bernoulli(0.7)) continue;
        const int pid = 100 + id + (rng.bernoulli(0.2) ? 1 : 0);
        if (pred.tracks.contains(pid) && pred.tracks.at(pid).points.back().frame >= p.frame) continue;
        pred.add(pid, p.frame, Box{p.box.x + rng.uniform(-6, 6), p.box.y + rng.uniform(-6, 6), p.box.w, p.box.h});
      }
    }
    for (const HotaAlpha& a : hota(gt, pred).per_alpha) {
      worst = std::max(worst, std::abs(a.hota * a.hota - a.deta * a.assa));
    }
  }
  if (worst > 1e-12) o.fail(fmt("max |HOTA^2 - DetA*AssA| = %.3e > 1e-12", worst));
  else o.detail = fmt("100 scenarios, max |HOTA^2 - DetA*AssA| = %.1e (<= 1e-12)", worst);
  return o;
}

// ---------------------------------------------------------------------------

Outcome harness_cross_oracle() {
  Outcome o;
  int n = 0;
  for (double drop : {0.0, 0.1, 0.3}) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      ScenarioSpec spec;
      spec.drop_rate = drop;
      spec.seed = seed;
      const SyntheticSequence seq = generate_synthetic_sequence(spec);
      const ExpectedCounts e = expected_counts(spec, seq);
      const ClearReport c = clear_metrics(to_frames(to_trajectories(seq.gt, true), seq.meta.seq_length),
                                          to_frames(seq.oracle_tracks(), seq.meta.seq_length));
      if (c.fn != e.fn || c.fp != 0 || c.idsw != 0) {
        o.fail(fmt("drop %.1f seed %d: fn %zu vs expected %zu, fp %zu, idsw %zu", drop, static_cast<int>(seed), c.fn,
                   e.fn, c.fp, c.idsw));
      }
      ++n;
    }
  }
  if (o.pass) o.detail = fmt("%d scenarios, FN exact, FP = IDSW = 0", n);
  return o;
}

// ---------------------------------------------------------------------------

Outcome tracker_end_to_end() {
  Outcome o;
  ScenarioSpec spec;
  spec.n_tracks = 3;
  spec.n_frames = 50;
  spec.motion = Motion::Linear;
  const SyntheticSequence seq = generate_synthetic_sequence(spec);
  const auto t0 = Clock::now();
  const TrajectorySet tracks = track_sequence(seq.detections_by_frame());
  const double secs = seconds_since(t0);
  const ClearReport c = summarize(evaluate_sequence(SequenceAnnotations{seq.meta, seq.gt}, tracks)).clear;
  if (c.mota != 1.0 || c.idsw != 0) o.fail(fmt("MOTA %.6f, IDSW %zu", c.mota, c.idsw));
  if (secs >= 1.0) o.fail(fmt("runtime %.3f s >= 1 s", secs));
  if (o.pass) o.detail = fmt("MOTA=%.3f IDSW=%zu in %.4f s (< 1 s)", c.mota, c.idsw, secs);
  return o;
}

// ---------------------------------------------------------------------------

Outcome gradient_suite() {
  Outcome o;
  const auto t0 = Clock::now();
  const std::vector<pfm::GradCase> cases = pfm::run_grad_suite(pfm::PfmConfig::gradcheck(), 1, false);
  const double secs = seconds_since(t0);
  double worst = 0.0;
  for (const pfm::GradCase& c : cases) {
    worst = std::max(worst, c.report.max_rel_err);
    if (!c.passed()) o.fail(fmt("%s: max_rel_err %.3e > 1e-4", c.name.c_str(), c.report.max_rel_err));
  }
  if (secs >= 120.0) o.fail(fmt("runtime %.1f s >= 120 s", secs));
  if (o.pass) o.detail = fmt("%zu cases, max_rel_err %.3e (<= 1e-4), %.1f s (< 120 s)", cases.size(), worst, secs);
  return o;
}

// ---------------------------------------------------------------------------

pfm::Matrix permute_rows(const pfm::Matrix& m, const std::vector<int>& perm) {
  pfm::Matrix out(m.rows(), m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r) out.row(r) = m.row(perm[static_cast<std::size_t>(r)]);
  return out;
}

std::vector<int> shuffled(int n, Rng& rng) {
  std::vector<int> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), 0);
  for (int i = n - 1; i > 0; --i) std::swap(p[static_cast<std::size_t>(i)], p[static_cast<std::size_t>(rng.integer(0, i))]);
  return p;
}

Outcome attention_invariances() {
  Outcome o;
  Rng rng(99);
  double worst_kv = 0.0, worst_q = 0.0;
  for (int i = 0; i < 20; ++i) {
    const int heads = static_cast<int>(rng.integer(1, 4));
    const int d = 4 * heads * static_cast<int>(rng.integer(1, 3));
    const int nq = static_cast<int>(rng.integer(1, 10)), nkv = static_cast<int>(rng.integer(1, 12));
    const pfm::AttentionParams p = pfm::AttentionParams::random(d, heads, rng, rng.bernoulli(0.5));
    const pfm::Matrix q = pfm::random_matrix(nq, d, rng, 1.0);
    const pfm::Matrix k = pfm::random_matrix(nkv, d, rng, 1.0);
    const pfm::Matrix v = pfm::random_matrix(nkv, d, rng, 1.0);
    const pfm::Matrix out = pfm::multi_head_cross_attention(q, k, v, p);
    const std::vector<int> kp = shuffled(nkv, rng);
    worst_kv = std::max(worst_kv, (pfm::multi_head_cross_attention(q, permute_rows(k, kp), permute_rows(v, kp), p) - out)
                                      .cwiseAbs()
                                      .maxCoeff());
    const std::vector<int> qp = shuffled(nq, rng);
    worst_q = std::max(worst_q, (pfm::multi_head_cross_attention(permute_rows(q, qp), k, v, p) - permute_rows(out, qp))
                                    .cwiseAbs()
                                    .maxCoeff());
  }
  if (worst_kv > 1e-12) o.fail(fmt("KV permutation changed the output by %.3e", worst_kv));
  if (worst_q > 1e-12) o.fail(fmt("query permutation off by %.3e", worst_q));
  if (o.pass) o.detail = fmt("20 cases, KV invariance %.1e, query equivariance %.1e (<= 1e-12)", worst_kv, worst_q);
  return o;
}

// ---------------------------------------------------------------------------

Outcome format_round_trip() {
  Outcome o;
  testing::TempDir tmp("acceptance-format");
  std::size_t flagged = 0, defects = 0;
  for (int i = 0; i < 50; ++i) {
    ScenarioSpec spec;
    spec.name = fmt("seq-%03d", i);
    spec.seed = static_cast<std::uint64_t>(100 + i);
    spec.n_tracks = 1 + i % 5;
    spec.n_frames = 10 + i;
    spec.jitter_px = 0.5 * (i % 3);
    spec.drop_rate = 0.1 * (i % 4);
    const SyntheticSequence seq = generate_synthetic_sequence(spec);
    const std::string text = serialize_annotations(seq.gt);
    const AnnotationSet back = parse_annotations(text, seq.meta);
    if (serialize_annotations(back) != text || !(back == seq.gt)) o.fail(spec.name + ": gt text not byte-identical");
    const AnnotationSet once = collapse_classes(seq.gt);
    if (!(collapse_classes(once) == once)) o.fail(spec.name + ": collapse_classes not idempotent");

    const std::filesystem::path dir = write_synthetic_sequence(tmp.path(), seq);
    if (read_text_file(dir / "gt" / "gt.txt") != text) o.fail(spec.name + ": written gt differs");
    if (!validate_sequence(scan_sequence(dir)).is_valid()) o.fail(spec.name + ": clean sequence rejected");

    // one injected defect per sequence, cycling through the three classes
    const std::filesystem::path gt_path = dir / "gt" / "gt.txt";
    ErrorCode expected = ErrorCode::FrameCountMismatch;
    switch (i % 3) {
      case 0:
        std::filesystem::remove(dir / seq.meta.infrared_dir / frame_filename(spec.n_frames, seq.meta.image_ext));
        expected = ErrorCode::FrameCountMismatch;
        break;
      case 1:
        std::ofstream(gt_path, std::ios::app) << "1,999,5,5,10,10,1,7,1\n";
        expected = ErrorCode::InvalidClass;
        break;
      case 2:
        std::ofstream(gt_path, std::ios::app) << spec.n_frames + 1 << ",999,5,5,10,10,1,1,1\n";
        expected = ErrorCode::FrameOutOfRange;
        break;
    }
    ++defects;
    const ValidationReport r = validate_sequence(scan_sequence(dir));
    if (r.is_valid() || !r.has(expected)) {
      o.fail(spec.name + ": injected " + std::string(to_string(expected)) + " not flagged");
    } else {
      ++flagged;
    }
  }
  if (o.pass) o.detail = fmt("50 sequences byte-identical; collapse idempotent; %zu/%zu defects flagged", flagged, defects);
  return o;
}

// ---------------------------------------------------------------------------

Outcome dataset_statistics() {
  Outcome o;
  const DatasetStats s = stats_from_counts(582, 401068, 0, 3994777, 25.0);
  const double density = s.density.value_or(-1.0), avg = s.avg_length_s.value_or(-1.0);
  if (std::abs(density - 9.96) > 0.01) o.fail(fmt("density %.4f, expected 9.96 +/- 0.01", density));
  if (std::abs(avg - 27.57) > 0.01) o.fail(fmt("avg length %.4f s, expected 27.57 +/- 0.01", avg));

  // and as printed by the command line
  std::ostringstream out, err;
  const std::vector<std::string> args{"stats", "--videos", "582", "--frames", "401068", "--boxes", "3994777", "--rate",
                                      "25"};
  if (run_cli(args, out, err) != 0) o.fail("stats command failed: " + err.str());
  if (out.str().find(fmt("%.2f", density)) == std::string::npos) o.fail("printed density missing");

  const double areas[] = {11.0 * 11, 22.0 * 22, 32.0 * 32, 64.0 * 64, 96.0 * 96};
  for (int i = 0; i < 5; ++i) {
    if (scale_bin(areas[i]) != i + 1) o.fail(fmt("area %.0f in bin %d, expected %d", areas[i], scale_bin(areas[i]), i + 1));
  }
  if (o.pass) o.detail = fmt("density %.4f (9.96 +/- 0.01), avg length %.4f s (27.57 +/- 0.01), bins 1..5", density, avg);
  return o;
}

// ---------------------------------------------------------------------------

Outcome protocol_two() {
  Outcome o;
  std::vector<SequenceAnnotations> data;
  std::map<std::string, TrajectorySet> results;
  const std::vector<std::pair<Platform, int>> plan{
      {Platform::Handheld, 58}, {Platform::Surveillance, 40}, {Platform::UAV, 22}};
  int i = 0;
  for (const auto& [platform, count] : plan) {
    for (int k = 0; k < count; ++k, ++i) {
      ScenarioSpec spec;
      spec.name = fmt("test-%03d", i);
      spec.seed = static_cast<std::uint64_t>(i + 1);
      spec.n_tracks = 1;
      spec.n_frames = 5;
      spec.platform = platform;
      const SyntheticSequence seq = generate_synthetic_sequence(spec);
      data.push_back(SequenceAnnotations{seq.meta, seq.gt});
      results[spec.name] = seq.oracle_tracks();
    }
  }
  // interleave the tags so grouping cannot rely on input order
  Rng rng(5);
  for (std::size_t k = data.size() - 1; k > 0; --k) {
    std::swap(data[k], data[static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(k)))]);
  }
  const EvaluationReport r = evaluate(data, results, Protocol{ProtocolKind::II, std::nullopt}, 4);
  std::map<std::string, std::size_t> sizes;
  for (const GroupReport& g : r.groups) sizes[g.label] = g.sequences.size();
  for (const auto& [platform, count] : plan) {
    const std::string label(to_string(platform));
    if (sizes[label] != static_cast<std::size_t>(count)) {
      o.fail(fmt("group %s has %zu sequences, expected %d", label.c_str(), sizes[label], count));
    }
  }
  if (r.groups.size() != 3) o.fail(fmt("%zu groups, expected 3", r.groups.size()));
  if (o.pass) o.detail = "handheld 58, surveillance 40, UAV 22";
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"assignment-oracle", assignment_oracle},
      {"metrics-formulas", metrics_formulas},
      {"hota-identity", hota_identity},
      {"harness-metrics-cross-oracle", harness_cross_oracle},
      {"tracker-end-to-end", tracker_end_to_end},
      {"gradient-verification", gradient_suite},
      {"attention-invariances", attention_invariances},
      {"format-round-trip", format_round_trip},
      {"dataset-statistics", dataset_statistics},
      {"protocol-ii-grouping", protocol_two},
  };
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.fail(std::string("exception: ") + e.what());
    }
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
