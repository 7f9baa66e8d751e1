#include "gace/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "gace/parallel.hpp"
#include "gace/point_index.hpp"

namespace gace {

namespace {

struct RankedDet {
  std::uint32_t frame;
  std::uint32_t index;
  double score;
};

/// Pooled order: score descending, then frame_id, frame position, detection index.
std::vector<RankedDet> rank_class(std::span<const EvalFrame> frames, std::uint32_t class_id,
                                  const std::vector<std::vector<double>>* scores = nullptr) {
  std::vector<RankedDet> out;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const auto& dets = frames[f].detections;
    for (std::size_t i = 0; i < dets.size(); ++i) {
      if (dets[i].class_id != class_id) continue;
      const double s = scores ? (*scores)[f][i] : dets[i].score;
      out.push_back({static_cast<std::uint32_t>(f), static_cast<std::uint32_t>(i), s});
    }
  }
  std::sort(out.begin(), out.end(), [&](const RankedDet& a, const RankedDet& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.frame != b.frame) {
      const auto& ia = frames[a.frame].frame_id;
      const auto& ib = frames[b.frame].frame_id;
      if (ia != ib) return ia < ib;
      return a.frame < b.frame;
    }
    return a.index < b.index;
  });
  return out;
}

bool is_ignored(const EvalFrame& f, std::size_t g) {
  return g < f.gt_ignored.size() && f.gt_ignored[g] != 0;
}

std::size_t count_gt(std::span<const EvalFrame> frames, std::uint32_t class_id) {
  std::size_t n = 0;
  for (const auto& f : frames) {
    for (std::size_t g = 0; g < f.ground_truth.size(); ++g) {
      if (f.ground_truth[g].class_id == class_id && !is_ignored(f, g)) ++n;
    }
  }
  return n;
}

/// Builds cumulative PR points from a ranked list of statuses.
PrCurve curve_from_ranking(const std::vector<RankedDet>& ranked,
                           const std::vector<std::vector<DetectionMatch>>& matches,
                           std::size_t num_gt) {
  PrCurve curve;
  curve.num_gt = num_gt;
  curve.no_ground_truth = num_gt == 0;
  std::size_t tp = 0, counted = 0;
  double heading_sum = 0.0;
  for (const auto& r : ranked) {
    const DetectionMatch& m = matches[r.frame][r.index];
    if (m.status == MatchStatus::kIgnored) continue;
    ++counted;
    if (m.status == MatchStatus::kTruePositive) {
      ++tp;
      heading_sum += m.heading_weight;
    }
    PrPoint p;
    p.threshold = r.score;
    p.tp = tp;
    p.precision = static_cast<double>(tp) / static_cast<double>(counted);
    p.heading_precision = std::clamp(heading_sum / static_cast<double>(counted), 0.0, 1.0);
    p.recall = num_gt ? static_cast<double>(tp) / static_cast<double>(num_gt) : 0.0;
    curve.points.push_back(p);
  }
  return curve;
}

}  // namespace

std::vector<EvalFrame> make_eval_frames(std::span<const Frame> frames,
                                        const DifficultyFilter& filter) {
  std::vector<EvalFrame> out(frames.size());
  parallel_for(frames.size(), [&](std::size_t i) {
    const Frame& f = frames[i];
    EvalFrame& e = out[i];
    e.frame_id = f.frame_id;
    e.detections = f.detections;
    if (f.ground_truth) e.ground_truth = *f.ground_truth;
    e.gt_ignored.assign(e.ground_truth.size(), 0);
    if (!filter.active() || e.ground_truth.empty()) return;
    const PointIndex index(f.points);
    std::vector<std::uint32_t> members;
    for (std::size_t g = 0; g < e.ground_truth.size(); ++g) {
      index.in_box(e.ground_truth[g].box, members);
      const std::size_t n = members.size();
      const bool outside = n < filter.min_points || (filter.max_points && n > *filter.max_points);
      e.gt_ignored[g] = outside ? 1 : 0;
    }
  });
  return out;
}

double heading_weight(double yaw_a, double yaw_b) {
  constexpr double kTwoPi = 2.0 * kPi;
  const double d = std::fmod(std::abs(yaw_a - yaw_b), kTwoPi);
  return std::clamp(1.0 - std::min(d, kTwoPi - d) / kPi, 0.0, 1.0);
}

std::vector<std::vector<DetectionMatch>> match_class(std::span<const EvalFrame> frames,
                                                     std::uint32_t class_id, double iou_thr) {
  std::vector<std::vector<DetectionMatch>> out(frames.size());
  std::vector<std::vector<std::uint8_t>> taken(frames.size());
  for (std::size_t f = 0; f < frames.size(); ++f) {
    out[f].resize(frames[f].detections.size());
    taken[f].assign(frames[f].ground_truth.size(), 0);
  }
  for (const auto& r : rank_class(frames, class_id)) {
    const EvalFrame& f = frames[r.frame];
    const Detection& det = f.detections[r.index];
    double best = -1.0;
    std::int32_t best_gt = -1;
    bool hits_ignored = false;
    for (std::size_t g = 0; g < f.ground_truth.size(); ++g) {
      const GroundTruth& gt = f.ground_truth[g];
      if (gt.class_id != class_id) continue;
      const double iou = iou3d(det.box, gt.box);
      if (iou < iou_thr) continue;
      if (is_ignored(f, g)) {
        hits_ignored = true;
        continue;
      }
      if (taken[r.frame][g]) continue;
      if (iou > best) {
        best = iou;
        best_gt = static_cast<std::int32_t>(g);
      }
    }
    DetectionMatch& m = out[r.frame][r.index];
    if (best_gt >= 0) {
      taken[r.frame][static_cast<std::size_t>(best_gt)] = 1;
      m.status = MatchStatus::kTruePositive;
      m.gt = best_gt;
      m.heading_weight =
          heading_weight(det.box.yaw, f.ground_truth[static_cast<std::size_t>(best_gt)].box.yaw);
    } else {
      m.status = hits_ignored ? MatchStatus::kIgnored : MatchStatus::kFalsePositive;
    }
  }
  return out;
}

PrCurve pr_curve(std::span<const EvalFrame> frames, std::uint32_t class_id, double iou_thr) {
  const auto matches = match_class(frames, class_id, iou_thr);
  return curve_from_ranking(rank_class(frames, class_id), matches,
                            count_gt(frames, class_id));
}

double average_precision(const PrCurve& curve, ApMode mode, bool heading) {
  if (curve.no_ground_truth || curve.points.empty()) return 0.0;
  const auto& pts = curve.points;
  const std::size_t n = pts.size();
  // Precision envelope: max precision at this rank or any later (higher-recall) rank.
  std::vector<double> envelope(n);
  double running = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    running = std::max(running, heading ? pts[k].heading_precision : pts[k].precision);
    envelope[k] = running;
  }
  if (mode == ApMode::kContinuous) {
    double area = 0.0;
    std::size_t prev_tp = 0;
    for (std::size_t k = 0; k < n; ++k) {
      if (pts[k].tp > prev_tp) {
        area += static_cast<double>(pts[k].tp - prev_tp) * envelope[k];
        prev_tp = pts[k].tp;
      }
    }
    return std::clamp(area / static_cast<double>(curve.num_gt), 0.0, 1.0);
  }
  // R40: recall j/40 is reached at the first rank with tp * 40 >= j * num_gt.
  constexpr std::size_t kSamples = 40;
  double sum = 0.0;
  std::size_t k = 0;
  for (std::size_t j = 1; j <= kSamples; ++j) {
    while (k < n && pts[k].tp * kSamples < j * curve.num_gt) ++k;
    if (k == n) break;  // unreachable recall contributes 0
    sum += envelope[k];
  }
  return std::clamp(sum / static_cast<double>(kSamples), 0.0, 1.0);
}

OracleGap oracle_gap(std::span<const EvalFrame> frames, std::uint32_t class_id, double iou_thr,
                     ApMode mode) {
  const auto matches = match_class(frames, class_id, iou_thr);
  const std::size_t num_gt = count_gt(frames, class_id);
  OracleGap out;
  out.baseline =
      average_precision(curve_from_ranking(rank_class(frames, class_id), matches, num_gt), mode);
  std::vector<std::vector<double>> oracle_scores(frames.size());
  for (std::size_t f = 0; f < frames.size(); ++f) {
    oracle_scores[f].resize(frames[f].detections.size());
    for (std::size_t i = 0; i < oracle_scores[f].size(); ++i) {
      oracle_scores[f][i] = matches[f][i].status == MatchStatus::kTruePositive ? 1.0 : 0.0;
    }
  }
  out.oracle = average_precision(
      curve_from_ranking(rank_class(frames, class_id, &oracle_scores), matches, num_gt),
      mode);
  return out;
}

double length_conditioner(std::size_t, const Detection& det) { return det.box.dx; }

double viewing_angle_conditioner(std::size_t, const Detection& det) {
  return viewing_angle(det.box);
}

std::vector<BinPrecision> conditional_precision(std::span<const EvalFrame> frames,
                                                std::uint32_t class_id, double iou_thr,
                                                const Conditioner& conditioner,
                                                std::span<const double> edges,
                                                double score_threshold) {
  if (edges.size() < 2) throw std::invalid_argument("conditional_precision needs >= 2 bin edges");
  if (!std::is_sorted(edges.begin(), edges.end())) {
    throw std::invalid_argument("bin edges must be ascending");
  }
  const auto matches = match_class(frames, class_id, iou_thr);
  std::vector<BinPrecision> bins(edges.size() - 1);
  for (std::size_t b = 0; b < bins.size(); ++b) {
    bins[b].lo = edges[b];
    bins[b].hi = edges[b + 1];
  }
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const auto& dets = frames[f].detections;
    for (std::size_t i = 0; i < dets.size(); ++i) {
      const DetectionMatch& m = matches[f][i];
      if (dets[i].class_id != class_id || dets[i].score < score_threshold ||
          m.status == MatchStatus::kIgnored) {
        continue;
      }
      const double value = conditioner(f, dets[i]);
      if (!(value >= edges.front() && value <= edges.back())) continue;
      auto it = std::upper_bound(edges.begin(), edges.end(), value);
      std::size_t b = static_cast<std::size_t>(it - edges.begin());
      b = b == 0 ? 0 : std::min(b - 1, bins.size() - 1);
      ++bins[b].detections;
      if (m.status == MatchStatus::kTruePositive) ++bins[b].true_positives;
    }
  }
  for (auto& b : bins) {
    if (b.detections > 0) {
      b.precision = static_cast<double>(b.true_positives) / static_cast<double>(b.detections);
    }
  }
  return bins;
}

EvalReport evaluate(std::span<const EvalFrame> frames, std::span<const std::string> class_names,
                    const IouThresholds& thresholds) {
  EvalReport report;
  report.classes.resize(class_names.size());
  parallel_for(class_names.size(), [&](std::size_t c) {
    const auto cls = static_cast<std::uint32_t>(c);
    const double thr = thresholds.at(cls);
    ClassReport& r = report.classes[c];
    r.name = class_names[c];
    r.curve = pr_curve(frames, cls, thr);
    r.num_gt = r.curve.num_gt;
    r.no_ground_truth = r.curve.no_ground_truth;
    for (const auto& f : frames) {
      for (const auto& d : f.detections) r.num_detections += d.class_id == cls ? 1 : 0;
    }
    r.ap = average_precision(r.curve, ApMode::kContinuous);
    r.aph = average_precision(r.curve, ApMode::kContinuous, true);
    r.ap_r40 = average_precision(r.curve, ApMode::kR40);
    r.aph_r40 = average_precision(r.curve, ApMode::kR40, true);
    r.oracle_ap = oracle_gap(frames, cls, thr, ApMode::kContinuous).oracle;
    r.oracle_ap_r40 = oracle_gap(frames, cls, thr, ApMode::kR40).oracle;
  });
  std::size_t counted = 0;
  for (const auto& r : report.classes) {
    if (r.no_ground_truth) continue;
    ++counted;
    report.map += r.ap;
    report.maph += r.aph;
    report.map_r40 += r.ap_r40;
    report.maph_r40 += r.aph_r40;
    report.oracle_map += r.oracle_ap;
  }
  if (counted > 0) {
    const double n = static_cast<double>(counted);
    report.map /= n;
    report.maph /= n;
    report.map_r40 /= n;
    report.maph_r40 /= n;
    report.oracle_map /= n;
  }
  return report;
}

}  // namespace gace
