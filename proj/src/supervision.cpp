#include "gace/supervision.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

namespace gace {

IouThresholds IouThresholds::defaults(std::size_t class_count) {
  IouThresholds t;
  t.per_class.assign(class_count, 0.5);
  if (class_count > 0) t.per_class[0] = 0.7;
  return t;
}

double IouThresholds::at(std::uint32_t class_id) const {
  if (class_id >= per_class.size()) {
    throw std::out_of_range("no IoU threshold for class " + std::to_string(class_id));
  }
  return per_class[class_id];
}

std::vector<std::uint32_t> rank_by_score(std::span<const Detection> detections) {
  std::vector<std::uint32_t> order(detections.size());
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    return detections[a].score > detections[b].score;
  });
  return order;
}

std::vector<LabeledDetection> assign_labels(std::span<const Detection> detections,
                                            std::span<const GroundTruth> gts,
                                            const IouThresholds& thresholds) {
  std::vector<LabeledDetection> out(detections.size());
  std::vector<std::vector<double>> iou(detections.size(), std::vector<double>(gts.size(), 0.0));
  for (std::size_t i = 0; i < detections.size(); ++i) {
    out[i].detection = detections[i];
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (gts[g].class_id != detections[i].class_id) continue;
      iou[i][g] = iou3d(detections[i].box, gts[g].box);
      out[i].v = std::max(out[i].v, iou[i][g]);
    }
  }

  std::vector<bool> taken(gts.size(), false);
  for (const std::uint32_t i : rank_by_score(detections)) {
    const double thr = thresholds.at(detections[i].class_id);
    std::ptrdiff_t best = -1;
    double best_iou = -1.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g] || gts[g].class_id != detections[i].class_id) continue;
      if (iou[i][g] > best_iou) {
        best_iou = iou[i][g];
        best = static_cast<std::ptrdiff_t>(g);
      }
    }
    if (best >= 0 && best_iou >= thr) {
      taken[static_cast<std::size_t>(best)] = true;
      out[i].u = 1;
    }
  }
  return out;
}

}  // namespace gace
