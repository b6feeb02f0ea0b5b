// SPDX-License-Identifier: Apache-2.0
//
// CLEAR (MOTA/MOTP), IDF1 and HOTA.
//
// Every metric is computed in two steps: raw counts per sequence, then a
// report derived from counts. Pooling several sequences sums the counts
// before any ratio is taken.
#pragma once

#include "vtmot/assignment.hpp"
#include "vtmot/mot_data.hpp"
#include "vtmot/trajectory.hpp"

#include <nlohmann/json_fwd.hpp>

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace vtmot {

struct FrameObjects {
  int frame = 0;
  std::vector<std::pair<int, Box>> entries;  // (id, box), ids unique
};

/// One FrameObjects per frame in [1, n_frames]. Throws Error(MismatchedFrames)
/// if a point lies outside that range.
std::vector<FrameObjects> to_frames(const TrajectorySet& tracks, int n_frames);

// ---------------------------------------------------------------------------
// CLEAR

struct ClearCounts {
  std::size_t tp = 0;
  std::size_t fn = 0;
  std::size_t fp = 0;
  std::size_t idsw = 0;
  double iou_sum = 0.0;

  std::size_t n_gt() const { return tp + fn; }
  ClearCounts& operator+=(const ClearCounts& o);
  friend bool operator==(const ClearCounts&, const ClearCounts&) = default;
};

struct ClearReport {
  double mota = 0.0;
  double motp = 0.0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t idsw = 0;
  std::size_t n_gt = 0;
  std::size_t tp = 0;

  friend bool operator==(const ClearReport&, const ClearReport&) = default;
};

/// Per frame: previous-frame pairs that still overlap >= threshold are kept
/// first, the rest is a maximum-IoU matching over pairs with IoU >= threshold.
/// A switch is counted when a gt id is matched to a different prediction than
/// at its most recent match. Frame numbers of gt and pred must line up.
ClearCounts clear_counts(std::span<const FrameObjects> gt, std::span<const FrameObjects> pred,
                         double threshold = 0.5);
ClearReport clear_report(const ClearCounts& c);
ClearReport clear_metrics(std::span<const FrameObjects> gt, std::span<const FrameObjects> pred,
                          double threshold = 0.5);

// ---------------------------------------------------------------------------
// IDF1

struct IdCounts {
  std::size_t idtp = 0;
  std::size_t idfp = 0;
  std::size_t idfn = 0;

  IdCounts& operator+=(const IdCounts& o);
  friend bool operator==(const IdCounts&, const IdCounts&) = default;
};

struct IdReport {
  double idf1 = 0.0;
  std::size_t idtp = 0;
  std::size_t idfp = 0;
  std::size_t idfn = 0;

  friend bool operator==(const IdReport&, const IdReport&) = default;
};

/// Global one-to-one trajectory matching minimizing IDFP + IDFN; a frame counts
/// towards IDTP when the paired boxes overlap with IoU >= threshold.
IdCounts id_counts(const TrajectorySet& gt, const TrajectorySet& pred, double threshold = 0.5);
IdReport id_report(const IdCounts& c);
IdReport idf1(const TrajectorySet& gt, const TrajectorySet& pred, double threshold = 0.5);

// ---------------------------------------------------------------------------
// HOTA

inline constexpr std::size_t kHotaAlphas = 19;

/// Localization thresholds 0.05, 0.10, ..., 0.95, computed as k/20.
double hota_alpha(std::size_t index);

struct HotaCounts {
  std::array<std::size_t, kHotaAlphas> tp{};
  std::array<std::size_t, kHotaAlphas> fn{};
  std::array<std::size_t, kHotaAlphas> fp{};
  std::array<double, kHotaAlphas> assoc_sum{};  // sum of A(c) over true positives

  HotaCounts& operator+=(const HotaCounts& o);
  friend bool operator==(const HotaCounts&, const HotaCounts&) = default;
};

struct HotaAlpha {
  double alpha = 0.0;
  double deta = 0.0;
  double assa = 0.0;
  double hota = 0.0;

  friend bool operator==(const HotaAlpha&, const HotaAlpha&) = default;
};

struct HotaReport {
  double hota = 0.0;
  double deta = 0.0;
  double assa = 0.0;
  std::array<HotaAlpha, kHotaAlphas> per_alpha{};

  friend bool operator==(const HotaReport&, const HotaReport&) = default;
};

/// Per alpha and frame, pairs with IoU >= alpha are matched maximizing the
/// global potential-match alignment of the two tracks first and IoU second.
HotaCounts hota_counts(const TrajectorySet& gt, const TrajectorySet& pred);
HotaReport hota_report(const HotaCounts& c);
HotaReport hota(const TrajectorySet& gt, const TrajectorySet& pred);

// ---------------------------------------------------------------------------
// Evaluation over a dataset

struct EvalCounts {
  ClearCounts clear;
  IdCounts id;
  HotaCounts hota;

  EvalCounts& operator+=(const EvalCounts& o);
  friend bool operator==(const EvalCounts&, const EvalCounts&) = default;
};

struct MetricsSummary {
  ClearReport clear;
  IdReport id;
  HotaReport hota;

  friend bool operator==(const MetricsSummary&, const MetricsSummary&) = default;
};

MetricsSummary summarize(const EvalCounts& c);

/// Counts of one sequence against class-collapsed, valid-only ground truth.
EvalCounts evaluate_sequence(const SequenceAnnotations& seq, const TrajectorySet& result);

enum class ProtocolKind { I, II };

struct Protocol {
  ProtocolKind kind = ProtocolKind::I;
  std::optional<Platform> platform;  // Protocol II only: restrict to one group
};

/// Headline numbers averaged over Protocol II groups (unweighted).
struct GroupMean {
  double hota = 0.0;
  double deta = 0.0;
  double assa = 0.0;
  double mota = 0.0;
  double motp = 0.0;
  double idf1 = 0.0;

  friend bool operator==(const GroupMean&, const GroupMean&) = default;
};

struct GroupReport {
  std::string label;
  std::vector<std::string> sequences;
  EvalCounts counts;
  MetricsSummary pooled;
};

struct SequenceResult {
  EvalCounts counts;
  MetricsSummary metrics;
};

struct EvaluationReport {
  Protocol protocol;
  std::map<std::string, SequenceResult> per_sequence;
  std::vector<GroupReport> groups;  // Protocol I: one group "all"
  EvalCounts counts;                // sum over every selected sequence
  MetricsSummary pooled;
  std::optional<GroupMean> group_mean;  // Protocol II only
};

/// Protocol I scores every sequence together. Protocol II groups sequences by
/// platform (handheld, surveillance, UAV) and scores each group; sequences of
/// unknown platform are not selected. Throws Error(MissingResult) naming every
/// selected sequence without a result. Up to `jobs` sequences are scored
/// concurrently; the report does not depend on `jobs`.
EvaluationReport evaluate(std::span<const SequenceAnnotations> dataset,
                          const std::map<std::string, TrajectorySet>& results, const Protocol& protocol,
                          unsigned jobs = 1);

/// Machine-readable form; metric values stay in [0,1].
nlohmann::json to_json(const MetricsSummary& m);
MetricsSummary metrics_summary_from_json(const nlohmann::json& j);
nlohmann::json to_json(const EvaluationReport& r);

}  // namespace vtmot
