#include "gace/point_index.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace gace {

namespace {

struct GridExtent {
  double x0, y0;
  std::int64_t nx, ny;
};

template <typename GetXY>
GridExtent fit_grid(std::size_t n, double cell, GetXY get) {
  if (n == 0) return {0.0, 0.0, 1, 1};
  double xmin = std::numeric_limits<double>::infinity(), ymin = xmin;
  double xmax = -xmin, ymax = -xmin;
  for (std::size_t i = 0; i < n; ++i) {
    const auto [x, y] = get(i);
    xmin = std::min(xmin, x);
    xmax = std::max(xmax, x);
    ymin = std::min(ymin, y);
    ymax = std::max(ymax, y);
  }
  const auto nx = static_cast<std::int64_t>(std::floor((xmax - xmin) / cell)) + 1;
  const auto ny = static_cast<std::int64_t>(std::floor((ymax - ymin) / cell)) + 1;
  return {xmin, ymin, nx, ny};
}

template <typename GetXY>
void bucket(std::size_t n, const GridExtent& g, double cell, GetXY get,
            std::vector<std::uint32_t>& start, std::vector<std::uint32_t>& order,
            std::vector<std::int64_t>* cell_of) {
  const auto cells = static_cast<std::size_t>(g.nx * g.ny);
  start.assign(cells + 1, 0);
  std::vector<std::int64_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto [x, y] = get(i);
    auto ix = std::clamp<std::int64_t>(static_cast<std::int64_t>((x - g.x0) / cell), 0, g.nx - 1);
    auto iy = std::clamp<std::int64_t>(static_cast<std::int64_t>((y - g.y0) / cell), 0, g.ny - 1);
    ids[i] = iy * g.nx + ix;
    ++start[static_cast<std::size_t>(ids[i]) + 1];
  }
  for (std::size_t c = 0; c < cells; ++c) start[c + 1] += start[c];
  order.resize(n);
  std::vector<std::uint32_t> fill(start.begin(), start.end() - 1);
  for (std::size_t i = 0; i < n; ++i) {
    order[fill[static_cast<std::size_t>(ids[i])]++] = static_cast<std::uint32_t>(i);
  }
  if (cell_of) *cell_of = std::move(ids);
}

}  // namespace

PointIndex::PointIndex(std::span<const Point> points, double cell_size)
    : points_(points), cell_(cell_size) {
  if (!(cell_size > 0.0)) throw std::invalid_argument("cell size must be positive");
  auto get = [&](std::size_t i) { return std::pair{points[i].x, points[i].y}; };
  const auto g = fit_grid(points.size(), cell_, get);
  x0_ = g.x0;
  y0_ = g.y0;
  nx_ = g.nx;
  ny_ = g.ny;
  bucket(points.size(), g, cell_, get, cell_start_, order_, nullptr);
  xyz_.resize(3 * order_.size());
  for (std::size_t k = 0; k < order_.size(); ++k) {
    const Point& p = points[order_[k]];
    xyz_[3 * k] = p.x;
    xyz_[3 * k + 1] = p.y;
    xyz_[3 * k + 2] = p.z;
  }
}

std::vector<std::uint32_t> PointIndex::in_box(const BoundingBox3D& box) const {
  std::vector<std::uint32_t> out;
  in_box(box, out);
  return out;
}

void PointIndex::in_box(const BoundingBox3D& box, std::vector<std::uint32_t>& out) const {
  out.clear();
  if (points_.empty()) return;
  const auto corners = box.bev_corners();
  double xmin = corners[0][0], xmax = xmin, ymin = corners[0][1], ymax = ymin;
  for (const auto& c : corners) {
    xmin = std::min(xmin, c[0]);
    xmax = std::max(xmax, c[0]);
    ymin = std::min(ymin, c[1]);
    ymax = std::max(ymax, c[1]);
  }
  // Cell assignment is monotone in x and y, so a small margin past the corner AABB covers any
  // rounding in the corner computation; the exact test decides membership.
  const double margin = 1e-6 * (1.0 + std::max({std::abs(xmin), std::abs(xmax), std::abs(ymin),
                                                 std::abs(ymax)}));
  const auto cell_of = [&](double v, double origin) {
    return static_cast<std::int64_t>(std::floor((v - origin) / cell_));
  };
  const auto ix0 = std::max<std::int64_t>(0, cell_of(xmin - margin, x0_));
  const auto ix1 = std::min<std::int64_t>(nx_ - 1, cell_of(xmax + margin, x0_));
  const auto iy0 = std::max<std::int64_t>(0, cell_of(ymin - margin, y0_));
  const auto iy1 = std::min<std::int64_t>(ny_ - 1, cell_of(ymax + margin, y0_));
  if (ix0 > ix1 || iy0 > iy1) return;
  const BoxFrame frame(box);
  for (std::int64_t iy = iy0; iy <= iy1; ++iy) {
    // Cells of one grid row are contiguous in `order_`.
    const auto row = static_cast<std::size_t>(iy * nx_);
    const std::uint32_t begin = cell_start_[row + static_cast<std::size_t>(ix0)];
    const std::uint32_t end = cell_start_[row + static_cast<std::size_t>(ix1) + 1];
    for (std::uint32_t k = begin; k < end; ++k) {
      const double* p = &xyz_[3 * static_cast<std::size_t>(k)];
      if (frame.contains(p[0], p[1], p[2])) out.push_back(order_[k]);
    }
  }
  std::sort(out.begin(), out.end());
}

std::vector<std::vector<std::uint32_t>> points_in_boxes(std::span<const Point> points,
                                                        std::span<const BoundingBox3D> boxes,
                                                        double cell_size) {
  if (!(cell_size > 0.0)) throw std::invalid_argument("cell size must be positive");
  std::vector<std::vector<std::uint32_t>> members(boxes.size());
  if (boxes.empty() || points.empty()) return members;
  // Grid over the union of box footprints; each cell lists the boxes overlapping it.
  std::vector<std::array<double, 4>> aabb(boxes.size());  // xmin, xmax, ymin, ymax
  double gx0 = std::numeric_limits<double>::infinity(), gy0 = gx0, gx1 = -gx0, gy1 = -gx0;
  for (std::size_t b = 0; b < boxes.size(); ++b) {
    const auto corners = boxes[b].bev_corners();
    auto& a = aabb[b];
    a = {corners[0][0], corners[0][0], corners[0][1], corners[0][1]};
    for (const auto& c : corners) {
      a[0] = std::min(a[0], c[0]);
      a[1] = std::max(a[1], c[0]);
      a[2] = std::min(a[2], c[1]);
      a[3] = std::max(a[3], c[1]);
    }
    // The margin covers rounding in the corner computation; the exact test decides membership.
    const double margin =
        1e-6 * (1.0 + std::max({std::abs(a[0]), std::abs(a[1]), std::abs(a[2]), std::abs(a[3])}));
    a[0] -= margin;
    a[1] += margin;
    a[2] -= margin;
    a[3] += margin;
    gx0 = std::min(gx0, a[0]);
    gx1 = std::max(gx1, a[1]);
    gy0 = std::min(gy0, a[2]);
    gy1 = std::max(gy1, a[3]);
  }
  const auto nx = static_cast<std::int64_t>((gx1 - gx0) / cell_size) + 1;
  const auto ny = static_cast<std::int64_t>((gy1 - gy0) / cell_size) + 1;
  // Arguments never fall below the grid origin, so truncation is floor; one shared monotone
  // mapping for boxes and points keeps the cell lists complete.
  const double inv_cell = 1.0 / cell_size;
  const auto cell_x = [&](double x) { return static_cast<std::int64_t>((x - gx0) * inv_cell); };
  const auto cell_y = [&](double y) { return static_cast<std::int64_t>((y - gy0) * inv_cell); };
  std::vector<std::uint32_t> start(static_cast<std::size_t>(nx * ny) + 1, 0);
  const auto for_cells = [&](std::size_t b, auto&& fn) {
    const auto ix0 = std::max<std::int64_t>(0, cell_x(aabb[b][0]));
    const auto ix1 = std::min<std::int64_t>(nx - 1, cell_x(aabb[b][1]));
    const auto iy0 = std::max<std::int64_t>(0, cell_y(aabb[b][2]));
    const auto iy1 = std::min<std::int64_t>(ny - 1, cell_y(aabb[b][3]));
    for (std::int64_t iy = iy0; iy <= iy1; ++iy) {
      for (std::int64_t ix = ix0; ix <= ix1; ++ix) fn(static_cast<std::size_t>(iy * nx + ix));
    }
  };
  for (std::size_t b = 0; b < boxes.size(); ++b) for_cells(b, [&](std::size_t c) { ++start[c + 1]; });
  for (std::size_t c = 0; c + 1 < start.size(); ++c) start[c + 1] += start[c];
  std::vector<std::uint32_t> cell_boxes(start.back());
  std::vector<std::uint32_t> fill(start.begin(), start.end() - 1);
  for (std::size_t b = 0; b < boxes.size(); ++b) {
    for_cells(b, [&](std::size_t c) { cell_boxes[fill[c]++] = static_cast<std::uint32_t>(b); });
  }
  std::vector<BoxFrame> frames;
  frames.reserve(boxes.size());
  for (const auto& box : boxes) frames.emplace_back(box);
  // Ascending point order keeps every member list sorted.
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Point& p = points[i];
    if (!(p.x >= gx0 && p.x <= gx1 && p.y >= gy0 && p.y <= gy1)) continue;
    const auto ix = std::min<std::int64_t>(nx - 1, cell_x(p.x));
    const auto iy = std::min<std::int64_t>(ny - 1, cell_y(p.y));
    const auto c = static_cast<std::size_t>(iy * nx + ix);
    for (std::uint32_t k = start[c]; k < start[c + 1]; ++k) {
      const std::uint32_t b = cell_boxes[k];
      if (frames[b].contains(p.x, p.y, p.z)) members[b].push_back(static_cast<std::uint32_t>(i));
    }
  }
  return members;
}

NeighborIndex::NeighborIndex(std::span<const BoundingBox3D> boxes, double radius)
    : boxes_(boxes), radius_(radius) {
  if (!(radius > 0.0)) throw std::invalid_argument("neighbor radius must be positive");
  auto get = [&](std::size_t i) { return std::pair{boxes[i].cx, boxes[i].cy}; };
  // Cells marginally wider than r keep every in-radius pair within adjacent cells under rounding.
  const double cell = radius_ * (1.0 + 1e-9);
  const auto g = fit_grid(boxes.size(), cell, get);
  x0_ = g.x0;
  y0_ = g.y0;
  nx_ = g.nx;
  ny_ = g.ny;
  bucket(boxes.size(), g, cell, get, cell_start_, order_, &cell_of_);
}

std::vector<std::uint32_t> NeighborIndex::query(std::size_t subject) const {
  std::vector<std::uint32_t> out;
  const BoundingBox3D& s = boxes_[subject];
  const std::int64_t cx = cell_of_[subject] % nx_;
  const std::int64_t cy = cell_of_[subject] / nx_;
  const double r2 = radius_ * radius_;
  for (std::int64_t iy = std::max<std::int64_t>(0, cy - 1); iy <= std::min(ny_ - 1, cy + 1); ++iy) {
    for (std::int64_t ix = std::max<std::int64_t>(0, cx - 1); ix <= std::min(nx_ - 1, cx + 1); ++ix) {
      const auto c = static_cast<std::size_t>(iy * nx_ + ix);
      for (std::uint32_t k = cell_start_[c]; k < cell_start_[c + 1]; ++k) {
        const std::uint32_t j = order_[k];
        if (j == subject) continue;
        const double dx = boxes_[j].cx - s.cx, dy = boxes_[j].cy - s.cy, dz = boxes_[j].cz - s.cz;
        if (dx * dx + dy * dy + dz * dz <= r2) out.push_back(j);
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace gace
