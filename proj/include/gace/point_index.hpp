#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gace/geometry.hpp"

namespace gace {

/// Uniform 2D grid over the xy-plane for box and radius queries over a point cloud.
/// Immutable after construction; queries are safe from any number of threads.
class PointIndex {
 public:
  explicit PointIndex(std::span<const Point> points, double cell_size = 1.0);

  /// Indices of points inside `box` (closed test), ascending.
  std::vector<std::uint32_t> in_box(const BoundingBox3D& box) const;
  void in_box(const BoundingBox3D& box, std::vector<std::uint32_t>& out) const;

  std::span<const Point> points() const { return points_; }

 private:
  std::span<const Point> points_;
  double cell_ = 1.0;
  double x0_ = 0.0, y0_ = 0.0;
  std::int64_t nx_ = 0, ny_ = 0;
  std::vector<std::uint32_t> cell_start_;  // CSR offsets, size nx*ny + 1
  std::vector<std::uint32_t> order_;       // point indices grouped by cell
  std::vector<double> xyz_;                // coordinates in `order_` sequence, 3 per point
};

/// Members of every box in one pass over the cloud: per box, ascending indices of the points
/// inside it (closed test). Cheaper than a PointIndex when queried once per cloud.
std::vector<std::vector<std::uint32_t>> points_in_boxes(std::span<const Point> points,
                                                        std::span<const BoundingBox3D> boxes,
                                                        double cell_size = 1.0);

/// Closed-ball 3D neighbor query over box centers, backed by a 2D grid with cell size r.
class NeighborIndex {
 public:
  NeighborIndex(std::span<const BoundingBox3D> boxes, double radius);

  /// Indices j != subject with |c_j - c_subject| <= r, ascending.
  std::vector<std::uint32_t> query(std::size_t subject) const;

 private:
  std::span<const BoundingBox3D> boxes_;
  double radius_;
  double x0_ = 0.0, y0_ = 0.0;
  std::int64_t nx_ = 0, ny_ = 0;
  std::vector<std::uint32_t> cell_start_;
  std::vector<std::uint32_t> order_;
  std::vector<std::int64_t> cell_of_;
};

}  // namespace gace
