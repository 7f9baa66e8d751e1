#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gace/geometry.hpp"

namespace gace {

struct Detection {
  BoundingBox3D box;
  std::uint32_t class_id = 0;
  double score = 0.0;
};

struct GroundTruth {
  BoundingBox3D box;
  std::uint32_t class_id = 0;
};

struct LabeledDetection {
  Detection detection;
  std::uint8_t u = 0;  // 1 = true positive
  double v = 0.0;      // best same-class IoU
};

/// Per-class IoU thresholds for a true positive. Defaults: 0.7 for class 0, 0.5 otherwise.
struct IouThresholds {
  std::vector<double> per_class;

  static IouThresholds defaults(std::size_t class_count);
  double at(std::uint32_t class_id) const;
};

/// Detection indices ordered by score descending, ties by index.
std::vector<std::uint32_t> rank_by_score(std::span<const Detection> detections);

/// Greedy one-to-one matching in score order. Output order equals input order.
std::vector<LabeledDetection> assign_labels(std::span<const Detection> detections,
                                            std::span<const GroundTruth> gts,
                                            const IouThresholds& thresholds);

}  // namespace gace
