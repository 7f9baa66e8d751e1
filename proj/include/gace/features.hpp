#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "gace/geometry.hpp"
#include "gace/point_index.hpp"
#include "gace/supervision.hpp"

namespace gace {

/// Maximum value ranges used to bring every metric input to unit scale.
/// Serialized into the model so a trained model can be applied to other sources.
struct NormConfig {
  double max_range = 80.0;
  double z_lo = -3.0;
  double z_hi = 8.0;
  std::array<double, 3> max_dims{25.0, 5.0, 8.0};
  double max_points = 4096.0;
  double radius = 40.0;
  std::uint32_t class_count = 3;
  ChannelSet stat_channels = ChannelSet::all();
  bool use_elongation = true;

  void validate() const;  // throws std::invalid_argument
  /// Statistics channels after applying use_elongation.
  ChannelSet effective_channels() const;
  std::size_t instance_dim() const;           // 13 + 4 * channels + classes
  std::size_t neighbor_geometry_dim() const;  // 6 + classes
  std::uint64_t digest() const;

  friend bool operator==(const NormConfig&, const NormConfig&) = default;
};

/// Fixed slots of the instance vector; statistics then class one-hot follow.
namespace slot {
inline constexpr std::size_t kCx = 0, kCy = 1, kCz = 2, kDx = 3, kDy = 4, kDz = 5;
inline constexpr std::size_t kCosYaw = 6, kSinYaw = 7, kScore = 8;
inline constexpr std::size_t kCosAlpha = 9, kSinAlpha = 10, kRange = 11, kCount = 12;
inline constexpr std::size_t kStatsBegin = 13;
}  // namespace slot

/// Instance feature groups that can be switched off. The base score belongs to the box group
/// unless keep_score is set.
struct FeatureGroups {
  bool box = true;
  bool num_points = true;
  bool viewing_angle = true;
  bool statistics = true;
  bool keep_score = false;

  static FeatureGroups all() { return {}; }
  static FeatureGroups none() { return {false, false, false, false, false}; }
  std::uint8_t bits() const;
  static FeatureGroups from_bits(std::uint8_t bits);

  friend bool operator==(const FeatureGroups&, const FeatureGroups&) = default;
};

/// 0/1 multiplier per instance entry; zeroed entries keep the vector length unchanged.
std::vector<double> ablation_mask(const FeatureGroups& groups, const NormConfig& cfg);

/// `in_box_points` are the points of the detection's box in sensor coordinates.
std::vector<double> instance_input(const Detection& det, std::span<const Point> in_box_points,
                                   const NormConfig& cfg);
/// Same, reading points by index from `cloud`; writes into `out` (length instance_dim).
void instance_input(const Detection& det, std::span<const Point> cloud,
                    std::span<const std::uint32_t> indices, const NormConfig& cfg,
                    std::span<double> out);

std::vector<std::uint32_t> radius_neighbors(std::span<const Detection> dets,
                                            std::size_t subject, double radius);

/// [|c - c_n| / r, (c - c_n) / r, cos(yaw - yaw_n), sin(yaw - yaw_n), one-hot(class_n)].
void neighbor_geometry(const Detection& subject, const Detection& neighbor, const NormConfig& cfg,
                       std::span<double> out);
/// Geometry entries followed by the neighbor's instance embedding.
std::vector<double> neighbor_input(const Detection& subject, const Detection& neighbor,
                                   std::span<const double> neighbor_embedding,
                                   const NormConfig& cfg);

/// Network-ready inputs for one frame. Neighbor pairs are stored CSR by subject.
struct FrameInputs {
  Eigen::MatrixXd instance;                  // instance_dim x N
  std::vector<std::uint32_t> pair_offsets;   // N + 1
  std::vector<std::uint32_t> pair_neighbor;  // P
  Eigen::MatrixXd pair_geometry;             // neighbor_geometry_dim x P

  std::size_t detection_count() const { return static_cast<std::size_t>(instance.cols()); }
  std::size_t pair_count() const { return pair_neighbor.size(); }
};

/// Optional per-stage wall time accumulators, in seconds.
struct FeatureTimings {
  double points_in_box = 0.0;
  double instance_features = 0.0;
  double neighbor_query = 0.0;
};

FrameInputs build_frame_inputs(std::span<const Detection> dets, std::span<const Point> cloud,
                               const NormConfig& cfg, FeatureTimings* timings = nullptr);

/// Neighbor CSR from explicit per-subject lists (indices must be valid).
void set_neighbors(FrameInputs& inputs, std::span<const Detection> dets,
                   const std::vector<std::vector<std::uint32_t>>& neighbors, const NormConfig& cfg);

}  // namespace gace
