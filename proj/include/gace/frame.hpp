#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gace/geometry.hpp"
#include "gace/supervision.hpp"

namespace gace {

/// One LiDAR sweep with the base detector's outputs and, for training data, ground truth.
struct Frame {
  std::string frame_id;
  std::uint32_t channels = 5;  // 4 (no elongation) or 5
  std::vector<Point> points;
  std::vector<Detection> detections;
  std::optional<std::vector<GroundTruth>> ground_truth;
};

}  // namespace gace
