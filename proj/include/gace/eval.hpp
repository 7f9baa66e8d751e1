#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gace/frame.hpp"
#include "gace/supervision.hpp"

namespace gace {

/// Detections and ground truth of one frame as seen by the metrics.
struct EvalFrame {
  std::string frame_id;
  std::vector<Detection> detections;
  std::vector<GroundTruth> ground_truth;
  /// Per ground truth; ignored objects neither count toward recall nor make matches FPs.
  std::vector<std::uint8_t> gt_ignored;
};

/// Point-count difficulty filter. Ground truth outside [min_points, max_points] is ignored.
struct DifficultyFilter {
  std::size_t min_points = 0;
  std::optional<std::size_t> max_points;

  bool active() const { return min_points > 0 || max_points.has_value(); }
};

/// Copies detections and ground truth; a frame without ground truth is treated as having none.
/// Point counts are only computed when the filter is active.
std::vector<EvalFrame> make_eval_frames(std::span<const Frame> frames,
                                        const DifficultyFilter& filter = {});

enum class MatchStatus : std::uint8_t { kOtherClass, kTruePositive, kFalsePositive, kIgnored };

struct DetectionMatch {
  MatchStatus status = MatchStatus::kOtherClass;
  std::int32_t gt = -1;          // matched ground-truth index
  double heading_weight = 0.0;   // 1 - wrapped heading error / pi, TPs only
};

/// Greedy matching of one class, pooled over frames in descending score order
/// (ties by frame position, then detection index). Indexed [frame][detection].
std::vector<std::vector<DetectionMatch>> match_class(std::span<const EvalFrame> frames,
                                                     std::uint32_t class_id, double iou_thr);

/// 1 - min(|d| mod 2pi, 2pi - |d| mod 2pi) / pi for heading difference d.
double heading_weight(double yaw_a, double yaw_b);

struct PrPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double heading_precision = 0.0;
  std::size_t tp = 0;  // cumulative true positives at this rank
};

struct PrCurve {
  std::vector<PrPoint> points;  // one per ranked detection
  std::size_t num_gt = 0;
  bool no_ground_truth = false;  // recall undefined; AP reported as 0
};

PrCurve pr_curve(std::span<const EvalFrame> frames, std::uint32_t class_id, double iou_thr);

enum class ApMode { kContinuous, kR40 };

/// heading = true integrates heading-weighted precision (APH).
double average_precision(const PrCurve& curve, ApMode mode, bool heading = false);

struct OracleGap {
  double baseline = 0.0;
  double oracle = 0.0;
  double gap() const { return oracle - baseline; }
};

/// Oracle re-ranking: matched TPs scored 1, everything else 0, with the baseline matching kept.
OracleGap oracle_gap(std::span<const EvalFrame> frames, std::uint32_t class_id, double iou_thr,
                     ApMode mode = ApMode::kContinuous);

/// Maps detection `det` of frame `frame` to the conditioning value.
using Conditioner = std::function<double(std::size_t frame, const Detection& det)>;

double length_conditioner(std::size_t frame, const Detection& det);
double viewing_angle_conditioner(std::size_t frame, const Detection& det);

struct BinPrecision {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t detections = 0;
  std::size_t true_positives = 0;
  std::optional<double> precision;  // absent for an empty bin
};

/// Precision of detections with score >= score_threshold, bucketed by conditioner value into
/// [edges[k], edges[k+1]). The last bin is closed. Values outside all bins are dropped.
std::vector<BinPrecision> conditional_precision(std::span<const EvalFrame> frames,
                                                std::uint32_t class_id, double iou_thr,
                                                const Conditioner& conditioner,
                                                std::span<const double> edges,
                                                double score_threshold);

struct ClassReport {
  std::string name;
  std::size_t num_gt = 0;
  std::size_t num_detections = 0;
  double ap = 0.0;
  double aph = 0.0;
  double ap_r40 = 0.0;
  double aph_r40 = 0.0;
  double oracle_ap = 0.0;
  double oracle_ap_r40 = 0.0;
  bool no_ground_truth = false;
  PrCurve curve;
};

struct EvalReport {
  std::vector<ClassReport> classes;
  double map = 0.0;   // mean over classes with ground truth
  double maph = 0.0;
  double map_r40 = 0.0;
  double maph_r40 = 0.0;
  double oracle_map = 0.0;

  /// Headline metric: R40 when `r40`, else continuous.
  double headline_map(bool r40) const { return r40 ? map_r40 : map; }
};

EvalReport evaluate(std::span<const EvalFrame> frames, std::span<const std::string> class_names,
                    const IouThresholds& thresholds);

}  // namespace gace
