// SPDX-License-Identifier: Apache-2.0
#include "vtmot/metrics.hpp"

#include "vtmot/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>
#include <unordered_map>

namespace vtmot {

namespace {

// Secondary key weight for HOTA matching; keeps IoU strictly below the
// resolution of the potential-match alignment score.
constexpr double kIouTieWeight = 1e-9;

double ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

using Mask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

// Dense index of track ids, in increasing id order.
struct IdIndex {
  std::unordered_map<int, int> to_index;
  std::vector<int> ids;

  explicit IdIndex(const TrajectorySet& t) {
    for (const auto& [id, traj] : t.tracks) {
      to_index.emplace(id, static_cast<int>(ids.size()));
      ids.push_back(id);
    }
  }
  int size() const { return static_cast<int>(ids.size()); }
};

// (dense index, box) per frame, frames 1..n_frames.
std::vector<std::vector<std::pair<int, Box>>> frame_table(const TrajectorySet& t, const IdIndex& index,
                                                          int n_frames) {
  std::vector<std::vector<std::pair<int, Box>>> table(static_cast<std::size_t>(n_frames) + 1);
  for (const auto& [id, traj] : t.tracks) {
    const int k = index.to_index.at(id);
    for (const TrajectoryPoint& p : traj.points) {
      if (p.frame >= 1 && p.frame <= n_frames) table[static_cast<std::size_t>(p.frame)].emplace_back(k, p.box);
    }
  }
  return table;
}

Eigen::MatrixXd iou_matrix(const std::vector<std::pair<int, Box>>& a, const std::vector<std::pair<int, Box>>& b) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = iou(a[i].second, b[j].second);
    }
  }
  return m;
}

}  // namespace

std::vector<FrameObjects> to_frames(const TrajectorySet& tracks, int n_frames) {
  std::vector<FrameObjects> frames(static_cast<std::size_t>(std::max(n_frames, 0)));
  for (int f = 1; f <= n_frames; ++f) frames[static_cast<std::size_t>(f - 1)].frame = f;
  for (const auto& [id, traj] : tracks.tracks) {
    for (const TrajectoryPoint& p : traj.points) {
      if (p.frame < 1 || p.frame > n_frames) {
        throw Error(ErrorCode::MismatchedFrames, "track " + std::to_string(id) + " has frame " +
                                                     std::to_string(p.frame) + " outside 1.." +
                                                     std::to_string(n_frames));
      }
      frames[static_cast<std::size_t>(p.frame - 1)].entries.emplace_back(id, p.box);
    }
  }
  return frames;
}

// ---------------------------------------------------------------------------
// CLEAR

ClearCounts& ClearCounts::operator+=(const ClearCounts& o) {
  tp += o.tp;
  fn += o.fn;
  fp += o.fp;
  idsw += o.idsw;
  iou_sum += o.iou_sum;
  return *this;
}

ClearCounts clear_counts(std::span<const FrameObjects> gt, std::span<const FrameObjects> pred, double threshold) {
  if (gt.size() != pred.size()) {
    throw Error(ErrorCode::MismatchedFrames, "ground truth covers " + std::to_string(gt.size()) +
                                                 " frames, predictions " + std::to_string(pred.size()));
  }
  ClearCounts c;
  std::unordered_map<int, int> last_match;       // gt id -> pred id at its most recent match
  std::unordered_map<int, int> prev_frame_match;  // gt id -> pred id matched in the previous frame
  for (std::size_t f = 0; f < gt.size(); ++f) {
    if (gt[f].frame != pred[f].frame) {
      throw Error(ErrorCode::MismatchedFrames, "frame " + std::to_string(gt[f].frame) + " paired with frame " +
                                                   std::to_string(pred[f].frame));
    }
    const auto& g = gt[f].entries;
    const auto& p = pred[f].entries;
    std::unordered_map<int, int> this_frame_match;
    if (!g.empty() && !p.empty()) {
      const Eigen::MatrixXd sim = iou_matrix(g, p);
      const Mask eligible = (sim.array() >= threshold).matrix();
      // Carried-over pairs dominate any combination of fresh ones.
      const double carry_bonus = static_cast<double>(std::min(g.size(), p.size())) + 1.0;
      Eigen::MatrixXd weight = sim;
      for (std::size_t i = 0; i < g.size(); ++i) {
        const auto prev = prev_frame_match.find(g[i].first);
        if (prev == prev_frame_match.end()) continue;
        for (std::size_t j = 0; j < p.size(); ++j) {
          const auto ii = static_cast<Eigen::Index>(i), jj = static_cast<Eigen::Index>(j);
          if (p[j].first == prev->second && eligible(ii, jj)) weight(ii, jj) += carry_bonus;
        }
      }
      const Assignment a = max_weight_matching(weight, eligible);
      for (const auto& [i, j] : a.pairs) {
        const int gid = g[static_cast<std::size_t>(i)].first;
        const int pid = p[static_cast<std::size_t>(j)].first;
        ++c.tp;
        c.iou_sum += sim(i, j);
        const auto last = last_match.find(gid);
        if (last != last_match.end() && last->second != pid) ++c.idsw;
        last_match[gid] = pid;
        this_frame_match[gid] = pid;
      }
    }
    c.fn += g.size() - this_frame_match.size();
    c.fp += p.size() - this_frame_match.size();
    prev_frame_match = std::move(this_frame_match);
  }
  return c;
}

ClearReport clear_report(const ClearCounts& c) {
  ClearReport r;
  r.tp = c.tp;
  r.fn = c.fn;
  r.fp = c.fp;
  r.idsw = c.idsw;
  r.n_gt = c.n_gt();
  const double n_gt = static_cast<double>(std::max<std::size_t>(1, r.n_gt));
  r.mota = 1.0 - static_cast<double>(c.fn + c.fp + c.idsw) / n_gt;
  if (r.n_gt == 0) r.mota = -static_cast<double>(c.fp + c.idsw);
  r.motp = ratio(c.iou_sum, static_cast<double>(c.tp));
  return r;
}

ClearReport clear_metrics(std::span<const FrameObjects> gt, std::span<const FrameObjects> pred, double threshold) {
  return clear_report(clear_counts(gt, pred, threshold));
}

// ---------------------------------------------------------------------------
// IDF1

IdCounts& IdCounts::operator+=(const IdCounts& o) {
  idtp += o.idtp;
  idfp += o.idfp;
  idfn += o.idfn;
  return *this;
}

IdCounts id_counts(const TrajectorySet& gt, const TrajectorySet& pred, double threshold) {
  const IdIndex gi(gt), pi(pred);
  const int n_frames = std::max(gt.max_frame(), pred.max_frame());
  const auto gtab = frame_table(gt, gi, n_frames);
  const auto ptab = frame_table(pred, pi, n_frames);

  const int G = gi.size(), P = pi.size();
  Eigen::MatrixXd overlap = Eigen::MatrixXd::Zero(G, P);  // frames with IoU >= threshold
  for (int f = 1; f <= n_frames; ++f) {
    const auto& g = gtab[static_cast<std::size_t>(f)];
    const auto& p = ptab[static_cast<std::size_t>(f)];
    for (const auto& [i, gb] : g) {
      for (const auto& [j, pb] : p) {
        if (iou(gb, pb) >= threshold) overlap(i, j) += 1.0;
      }
    }
  }
  std::vector<double> glen(static_cast<std::size_t>(G)), plen(static_cast<std::size_t>(P));
  for (const auto& [id, t] : gt.tracks) glen[static_cast<std::size_t>(gi.to_index.at(id))] = static_cast<double>(t.points.size());
  for (const auto& [id, t] : pred.tracks) plen[static_cast<std::size_t>(pi.to_index.at(id))] = static_cast<double>(t.points.size());

  IdCounts c;
  const std::size_t total_gt = gt.box_count(), total_pred = pred.box_count();
  if (G > 0 && P > 0) {
    // Square (G+P) cost of FN+FP: gt rows x (pred cols | gt dummies), pred dummies x (pred cols | 0).
    const int n = G + P;
    Eigen::MatrixXd cost = Eigen::MatrixXd::Zero(n, n);
    const double big = static_cast<double>(total_gt + total_pred) + 1.0;
    for (int i = 0; i < G; ++i) {
      for (int j = 0; j < P; ++j) cost(i, j) = glen[static_cast<std::size_t>(i)] + plen[static_cast<std::size_t>(j)] - 2.0 * overlap(i, j);
      for (int k = 0; k < G; ++k) cost(i, P + k) = (k == i) ? glen[static_cast<std::size_t>(i)] : big;
    }
    for (int k = 0; k < P; ++k) {
      for (int j = 0; j < P; ++j) cost(G + k, j) = (k == j) ? plen[static_cast<std::size_t>(j)] : big;
    }
    const Assignment a = hungarian(cost);
    double idtp = 0.0;
    for (const auto& [r, col] : a.pairs) {
      if (r < G && col < P) idtp += overlap(r, col);
    }
    c.idtp = static_cast<std::size_t>(std::llround(idtp));
  }
  c.idfn = total_gt - c.idtp;
  c.idfp = total_pred - c.idtp;
  return c;
}

IdReport id_report(const IdCounts& c) {
  IdReport r;
  r.idtp = c.idtp;
  r.idfp = c.idfp;
  r.idfn = c.idfn;
  r.idf1 = ratio(2.0 * static_cast<double>(c.idtp), static_cast<double>(2 * c.idtp + c.idfp + c.idfn));
  return r;
}

IdReport idf1(const TrajectorySet& gt, const TrajectorySet& pred, double threshold) {
  return id_report(id_counts(gt, pred, threshold));
}

// ---------------------------------------------------------------------------
// HOTA

double hota_alpha(std::size_t index) { return static_cast<double>(index + 1) / 20.0; }

HotaCounts& HotaCounts::operator+=(const HotaCounts& o) {
  for (std::size_t a = 0; a < kHotaAlphas; ++a) {
    tp[a] += o.tp[a];
    fn[a] += o.fn[a];
    fp[a] += o.fp[a];
    assoc_sum[a] += o.assoc_sum[a];
  }
  return *this;
}

HotaCounts hota_counts(const TrajectorySet& gt, const TrajectorySet& pred) {
  const IdIndex gi(gt), pi(pred);
  const int n_frames = std::max(gt.max_frame(), pred.max_frame());
  const auto gtab = frame_table(gt, gi, n_frames);
  const auto ptab = frame_table(pred, pi, n_frames);
  const int G = gi.size(), P = pi.size();

  std::vector<double> glen(static_cast<std::size_t>(G)), plen(static_cast<std::size_t>(P));
  for (const auto& [id, t] : gt.tracks) glen[static_cast<std::size_t>(gi.to_index.at(id))] = static_cast<double>(t.points.size());
  for (const auto& [id, t] : pred.tracks) plen[static_cast<std::size_t>(pi.to_index.at(id))] = static_cast<double>(t.points.size());

  std::vector<Eigen::MatrixXd> ious(static_cast<std::size_t>(n_frames) + 1);
  std::array<Eigen::MatrixXd, kHotaAlphas> potential;
  for (auto& m : potential) m = Eigen::MatrixXd::Zero(G, P);
  for (int f = 1; f <= n_frames; ++f) {
    const auto& g = gtab[static_cast<std::size_t>(f)];
    const auto& p = ptab[static_cast<std::size_t>(f)];
    Eigen::MatrixXd& m = ious[static_cast<std::size_t>(f)];
    m = iou_matrix(g, p);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        for (std::size_t a = 0; a < kHotaAlphas; ++a) {
          if (m(i, j) >= hota_alpha(a)) potential[a](g[static_cast<std::size_t>(i)].first, p[static_cast<std::size_t>(j)].first) += 1.0;
        }
      }
    }
  }

  HotaCounts c;
  for (std::size_t a = 0; a < kHotaAlphas; ++a) {
    const double alpha = hota_alpha(a);
    Eigen::MatrixXd alignment(G, P);
    for (int i = 0; i < G; ++i) {
      for (int j = 0; j < P; ++j) {
        const double both = potential[a](i, j);
        alignment(i, j) = ratio(both, glen[static_cast<std::size_t>(i)] + plen[static_cast<std::size_t>(j)] - both);
      }
    }
    Eigen::MatrixXd matched = Eigen::MatrixXd::Zero(G, P);
    for (int f = 1; f <= n_frames; ++f) {
      const auto& g = gtab[static_cast<std::size_t>(f)];
      const auto& p = ptab[static_cast<std::size_t>(f)];
      std::size_t tp = 0;
      if (!g.empty() && !p.empty()) {
        const Eigen::MatrixXd& sim = ious[static_cast<std::size_t>(f)];
        const Mask eligible = (sim.array() >= alpha).matrix();
        Eigen::MatrixXd weight(sim.rows(), sim.cols());
        for (Eigen::Index i = 0; i < sim.rows(); ++i) {
          for (Eigen::Index j = 0; j < sim.cols(); ++j) {
            weight(i, j) = alignment(g[static_cast<std::size_t>(i)].first, p[static_cast<std::size_t>(j)].first) +
                           kIouTieWeight * sim(i, j);
          }
        }
        const Assignment m = max_weight_matching(weight, eligible);
        for (const auto& [i, j] : m.pairs) {
          matched(g[static_cast<std::size_t>(i)].first, p[static_cast<std::size_t>(j)].first) += 1.0;
        }
        tp = m.pairs.size();
      }
      c.tp[a] += tp;
      c.fn[a] += g.size() - tp;
      c.fp[a] += p.size() - tp;
    }
    // Each TP of pair (i, j) contributes A = TPA / (TPA + FNA + FPA).
    double assoc = 0.0;
    for (int i = 0; i < G; ++i) {
      for (int j = 0; j < P; ++j) {
        const double tpa = matched(i, j);
        if (tpa > 0.0) assoc += tpa * tpa / (glen[static_cast<std::size_t>(i)] + plen[static_cast<std::size_t>(j)] - tpa);
      }
    }
    c.assoc_sum[a] = assoc;
  }
  return c;
}

HotaReport hota_report(const HotaCounts& c) {
  HotaReport r;
  for (std::size_t a = 0; a < kHotaAlphas; ++a) {
    HotaAlpha& h = r.per_alpha[a];
    h.alpha = hota_alpha(a);
    const double tp = static_cast<double>(c.tp[a]);
    h.deta = ratio(tp, tp + static_cast<double>(c.fn[a] + c.fp[a]));
    h.assa = ratio(c.assoc_sum[a], tp);
    h.hota = std::sqrt(h.deta * h.assa);
    r.hota += h.hota;
    r.deta += h.deta;
    r.assa += h.assa;
  }
  r.hota /= static_cast<double>(kHotaAlphas);
  r.deta /= static_cast<double>(kHotaAlphas);
  r.assa /= static_cast<double>(kHotaAlphas);
  return r;
}

HotaReport hota(const TrajectorySet& gt, const TrajectorySet& pred) { return hota_report(hota_counts(gt, pred)); }

// ---------------------------------------------------------------------------
// Dataset evaluation

EvalCounts& EvalCounts::operator+=(const EvalCounts& o) {
  clear += o.clear;
  id += o.id;
  hota += o.hota;
  return *this;
}

MetricsSummary summarize(const EvalCounts& c) {
  return MetricsSummary{clear_report(c.clear), id_report(c.id), hota_report(c.hota)};
}

EvalCounts evaluate_sequence(const SequenceAnnotations& seq, const TrajectorySet& result) {
  const TrajectorySet gt = to_trajectories(collapse_classes(seq.gt), /*valid_only=*/true);
  const int n_frames = seq.meta.seq_length;
  const auto gt_frames = to_frames(gt, n_frames);
  const auto pred_frames = to_frames(result, n_frames);
  EvalCounts c;
  c.clear = clear_counts(gt_frames, pred_frames, 0.5);
  c.id = id_counts(gt, result, 0.5);
  c.hota = hota_counts(gt, result);
  return c;
}

EvaluationReport evaluate(std::span<const SequenceAnnotations> dataset,
                          const std::map<std::string, TrajectorySet>& results, const Protocol& protocol,
                          unsigned jobs) {
  EvaluationReport report;
  report.protocol = protocol;

  struct Group {
    std::string label;
    std::optional<Platform> platform;
  };
  std::vector<Group> groups;
  if (protocol.kind == ProtocolKind::I) {
    groups.push_back({"all", std::nullopt});
  } else {
    for (Platform p : {Platform::Handheld, Platform::Surveillance, Platform::UAV}) {
      if (!protocol.platform || *protocol.platform == p) groups.push_back({std::string(to_string(p)), p});
    }
  }
  const auto selected_by = [&](const Group& g, const SequenceAnnotations& s) {
    return !g.platform || s.meta.platform == *g.platform;
  };

  std::vector<const SequenceAnnotations*> selected;
  for (const SequenceAnnotations& s : dataset) {
    if (std::any_of(groups.begin(), groups.end(), [&](const Group& g) { return selected_by(g, s); })) {
      selected.push_back(&s);
    }
  }
  std::sort(selected.begin(), selected.end(),
            [](const auto* a, const auto* b) { return a->meta.name < b->meta.name; });

  std::string missing;
  for (const auto* s : selected) {
    if (!results.contains(s->meta.name)) missing += (missing.empty() ? "" : ", ") + s->meta.name;
  }
  if (!missing.empty()) throw Error(ErrorCode::MissingResult, "no tracker result for: " + missing);

  std::vector<EvalCounts> counts(selected.size());
  std::vector<std::exception_ptr> failures(selected.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < selected.size(); i = next++) {
      try {
        counts[i] = evaluate_sequence(*selected[i], results.at(selected[i]->meta.name));
      } catch (...) {
        failures[i] = std::current_exception();
      }
    }
  };
  const unsigned n_workers = std::clamp<unsigned>(jobs, 1u, static_cast<unsigned>(std::max<std::size_t>(1, selected.size())));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  }
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }

  for (std::size_t i = 0; i < selected.size(); ++i) {
    report.per_sequence[selected[i]->meta.name] = SequenceResult{counts[i], summarize(counts[i])};
    report.counts += counts[i];
  }
  report.pooled = summarize(report.counts);

  for (const Group& g : groups) {
    GroupReport gr;
    gr.label = g.label;
    for (std::size_t i = 0; i < selected.size(); ++i) {
      if (!selected_by(g, *selected[i])) continue;
      gr.sequences.push_back(selected[i]->meta.name);
      gr.counts += counts[i];
    }
    gr.pooled = summarize(gr.counts);
    report.groups.push_back(std::move(gr));
  }

  if (protocol.kind == ProtocolKind::II) {
    GroupMean mean;
    double n = 0.0;
    for (const GroupReport& gr : report.groups) {
      if (gr.sequences.empty()) continue;
      n += 1.0;
      mean.hota += gr.pooled.hota.hota;
      mean.deta += gr.pooled.hota.deta;
      mean.assa += gr.pooled.hota.assa;
      mean.mota += gr.pooled.clear.mota;
      mean.motp += gr.pooled.clear.motp;
      mean.idf1 += gr.pooled.id.idf1;
    }
    if (n > 0.0) {
      for (double* v : {&mean.hota, &mean.deta, &mean.assa, &mean.mota, &mean.motp, &mean.idf1}) *v /= n;
    }
    report.group_mean = mean;
  }
  return report;
}

// ---------------------------------------------------------------------------
// JSON

nlohmann::json to_json(const MetricsSummary& m) {
  nlohmann::json per_alpha = nlohmann::json::array();
  for (const HotaAlpha& a : m.hota.per_alpha) {
    per_alpha.push_back({{"alpha", a.alpha}, {"DetA", a.deta}, {"AssA", a.assa}, {"HOTA", a.hota}});
  }
  return {
      {"HOTA", m.hota.hota}, {"DetA", m.hota.deta}, {"AssA", m.hota.assa},
      {"MOTA", m.clear.mota}, {"MOTP", m.clear.motp}, {"IDF1", m.id.idf1},
      {"FP", m.clear.fp},     {"FN", m.clear.fn},     {"IDSW", m.clear.idsw},
      {"TP", m.clear.tp},     {"GT", m.clear.n_gt},   {"IDTP", m.id.idtp},
      {"IDFP", m.id.idfp},    {"IDFN", m.id.idfn},    {"per_alpha", per_alpha},
  };
}

MetricsSummary metrics_summary_from_json(const nlohmann::json& j) {
  MetricsSummary m;
  m.hota.hota = j.at("HOTA").get<double>();
  m.hota.deta = j.at("DetA").get<double>();
  m.hota.assa = j.at("AssA").get<double>();
  m.clear.mota = j.at("MOTA").get<double>();
  m.clear.motp = j.at("MOTP").get<double>();
  m.id.idf1 = j.at("IDF1").get<double>();
  m.clear.fp = j.at("FP").get<std::size_t>();
  m.clear.fn = j.at("FN").get<std::size_t>();
  m.clear.idsw = j.at("IDSW").get<std::size_t>();
  m.clear.tp = j.at("TP").get<std::size_t>();
  m.clear.n_gt = j.at("GT").get<std::size_t>();
  m.id.idtp = j.at("IDTP").get<std::size_t>();
  m.id.idfp = j.at("IDFP").get<std::size_t>();
  m.id.idfn = j.at("IDFN").get<std::size_t>();
  const auto& pa = j.at("per_alpha");
  if (pa.size() != kHotaAlphas) throw Error(ErrorCode::InvalidValue, "per_alpha must have 19 entries");
  for (std::size_t a = 0; a < kHotaAlphas; ++a) {
    m.hota.per_alpha[a] = HotaAlpha{pa[a].at("alpha").get<double>(), pa[a].at("DetA").get<double>(),
                                    pa[a].at("AssA").get<double>(), pa[a].at("HOTA").get<double>()};
  }
  return m;
}

nlohmann::json to_json(const EvaluationReport& r) {
  nlohmann::json j;
  j["protocol"] = r.protocol.kind == ProtocolKind::I ? "I" : "II";
  nlohmann::json seqs = nlohmann::json::object();
  for (const auto& [name, res] : r.per_sequence) seqs[name] = to_json(res.metrics);
  j["sequences"] = seqs;
  nlohmann::json groups = nlohmann::json::array();
  for (const GroupReport& g : r.groups) {
    groups.push_back({{"group", g.label}, {"sequences", g.sequences}, {"metrics", to_json(g.pooled)}});
  }
  j["groups"] = groups;
  j["pooled"] = to_json(r.pooled);
  if (r.group_mean) {
    const GroupMean& m = *r.group_mean;
    j["group_mean"] = {{"HOTA", m.hota}, {"DetA", m.deta}, {"AssA", m.assa},
                       {"MOTA", m.mota}, {"MOTP", m.motp}, {"IDF1", m.idf1}};
  }
  return j;
}

}  // namespace vtmot
