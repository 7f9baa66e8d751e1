#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

namespace gace {

inline constexpr double kPi = std::numbers::pi;

/// Wraps an angle into (-pi, pi].
double wrap_angle(double theta);

/// One LiDAR return. Elongation is 0 for 4-channel sources.
struct Point {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double intensity = 0.0;
  double elongation = 0.0;
};

/// Oriented box, yaw about +z. Extents are full lengths along the box axes.
struct BoundingBox3D {
  BoundingBox3D() = default;
  /// Throws std::invalid_argument on non-positive or non-finite extents.
  BoundingBox3D(double cx, double cy, double cz, double dx, double dy, double dz, double yaw);

  double cx = 0.0, cy = 0.0, cz = 0.0;
  double dx = 1.0, dy = 1.0, dz = 1.0;
  double yaw = 0.0;

  double volume() const { return dx * dy * dz; }
  double range() const;  // 3D distance of the center from the sensor

  /// BEV corners, counter-clockwise.
  std::array<std::array<double, 2>, 4> bev_corners() const;

  friend bool operator==(const BoundingBox3D&, const BoundingBox3D&) = default;
};

/// Rigid motion about the sensor z-axis followed by a translation.
BoundingBox3D transform_box(const BoundingBox3D& box, double rotation, double tx, double ty, double tz);
Point transform_point(const Point& p, double rotation, double tx, double ty, double tz);

/// Angle between line of sight and heading. Returns yaw for a center on the sensor axis.
double viewing_angle(const BoundingBox3D& box);

std::array<double, 2> angle_encode(double theta);

/// Precomputed world-to-box transform for repeated containment tests.
class BoxFrame {
 public:
  explicit BoxFrame(const BoundingBox3D& box);

  std::array<double, 3> to_local(double x, double y, double z) const {
    const double tx = x - cx_, ty = y - cy_;
    return {tx * cos_ + ty * sin_, -tx * sin_ + ty * cos_, z - cz_};
  }
  bool contains(double x, double y, double z) const {
    const double lz = z - cz_;
    if (!(lz <= hz_ && lz >= -hz_)) return false;
    const auto l = to_local(x, y, z);
    return l[0] <= hx_ && l[0] >= -hx_ && l[1] <= hy_ && l[1] >= -hy_;
  }
  /// Local coordinates divided by the full extents.
  std::array<double, 3> to_canonical(double x, double y, double z) const {
    const auto l = to_local(x, y, z);
    return {l[0] * inv_dx_, l[1] * inv_dy_, l[2] * inv_dz_};
  }

 private:
  double cx_, cy_, cz_, cos_, sin_;
  double hx_, hy_, hz_;
  double inv_dx_, inv_dy_, inv_dz_;
};

/// Closed containment: boundary points are inside.
std::vector<Point> points_in_box(std::span<const Point> points, const BoundingBox3D& box);
std::vector<std::uint32_t> points_in_box_indices(std::span<const Point> points,
                                                 const BoundingBox3D& box);

std::vector<Point> canonicalize(std::span<const Point> points, const BoundingBox3D& box);

enum class StatChannel : std::uint8_t { kX = 0, kY, kZ, kIntensity, kElongation };

/// Ordered subset of statistics channels.
class ChannelSet {
 public:
  ChannelSet() = default;
  explicit ChannelSet(std::vector<StatChannel> channels);
  static ChannelSet all();      // x, y, z, intensity, elongation
  static ChannelSet spatial();  // x, y, z
  static ChannelSet from_mask(std::uint8_t mask);

  std::size_t size() const { return channels_.size(); }
  const std::vector<StatChannel>& channels() const { return channels_; }
  bool contains(StatChannel c) const;
  std::uint8_t mask() const;
  ChannelSet without(StatChannel c) const;

  friend bool operator==(const ChannelSet&, const ChannelSet&) = default;

 private:
  std::vector<StatChannel> channels_;
};

double channel_value(const Point& p, StatChannel c);

struct ChannelStats {
  double mean = 0.0;
  double std = 0.0;
  double min = 0.0;
  double max = 0.0;
};

struct PointStats {
  std::vector<ChannelStats> channels;  // one per ChannelSet entry, same order
  std::size_t point_count = 0;
};

/// Population statistics of already-canonicalized points. Empty input gives zeros.
PointStats point_statistics(std::span<const Point> canonical_points, const ChannelSet& channels);

/// Intersection area of the two yaw-rotated footprints. Symmetric bit-for-bit.
double bev_overlap_area(const BoundingBox3D& a, const BoundingBox3D& b);

/// Volumetric IoU in [0, 1]. Symmetric bit-for-bit.
double iou3d(const BoundingBox3D& a, const BoundingBox3D& b);

/// Convex polygon area by the shoelace formula (vertices in order).
double polygon_area(std::span<const std::array<double, 2>> polygon);

}  // namespace gace
