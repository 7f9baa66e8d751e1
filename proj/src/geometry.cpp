#include "gace/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <tuple>

namespace gace {

namespace {

constexpr double kOnEdgeTolerance = 1e-9;

using Vec2 = std::array<double, 2>;

double cross(const Vec2& o, const Vec2& a, const Vec2& b) {
  return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
}

// Clips `subject` against the half-plane left of the directed edge (e0 -> e1).
std::vector<Vec2> clip_half_plane(const std::vector<Vec2>& subject, const Vec2& e0,
                                  const Vec2& e1) {
  std::vector<Vec2> out;
  out.reserve(subject.size() + 2);
  const std::size_t n = subject.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& cur = subject[i];
    const Vec2& nxt = subject[(i + 1) % n];
    const double dc = cross(e0, e1, cur);
    const double dn = cross(e0, e1, nxt);
    const bool cur_in = dc >= -kOnEdgeTolerance;
    const bool nxt_in = dn >= -kOnEdgeTolerance;
    if (cur_in) out.push_back(cur);
    if (cur_in != nxt_in) {
      const double t = dc / (dc - dn);
      out.push_back({cur[0] + t * (nxt[0] - cur[0]), cur[1] + t * (nxt[1] - cur[1])});
    }
  }
  return out;
}

auto box_key(const BoundingBox3D& b) {
  return std::tie(b.cx, b.cy, b.cz, b.dx, b.dy, b.dz, b.yaw);
}

// Fixes argument order so that f(a, b) and f(b, a) run the identical computation.
std::pair<const BoundingBox3D*, const BoundingBox3D*> ordered(const BoundingBox3D& a,
                                                              const BoundingBox3D& b) {
  if (box_key(b) < box_key(a)) return {&b, &a};
  return {&a, &b};
}

double clip_area(const BoundingBox3D& a, const BoundingBox3D& b) {
  const auto ca = a.bev_corners();
  const auto cb = b.bev_corners();
  std::vector<Vec2> poly(ca.begin(), ca.end());
  for (std::size_t i = 0; i < 4 && !poly.empty(); ++i) {
    poly = clip_half_plane(poly, cb[i], cb[(i + 1) % 4]);
  }
  if (poly.size() < 3) return 0.0;
  return std::max(0.0, polygon_area(poly));
}

}  // namespace

double wrap_angle(double theta) {
  double r = std::remainder(theta, 2.0 * kPi);
  if (r <= -kPi) r += 2.0 * kPi;
  return r;
}

BoundingBox3D::BoundingBox3D(double cx_, double cy_, double cz_, double dx_, double dy_,
                             double dz_, double yaw_)
    : cx(cx_), cy(cy_), cz(cz_), dx(dx_), dy(dy_), dz(dz_), yaw(wrap_angle(yaw_)) {
  if (!(dx > 0.0 && dy > 0.0 && dz > 0.0) || !std::isfinite(dx) || !std::isfinite(dy) ||
      !std::isfinite(dz)) {
    throw std::invalid_argument("bounding box extents must be positive and finite");
  }
  if (!std::isfinite(cx) || !std::isfinite(cy) || !std::isfinite(cz) || !std::isfinite(yaw)) {
    throw std::invalid_argument("bounding box center and yaw must be finite");
  }
}

double BoundingBox3D::range() const { return std::sqrt(cx * cx + cy * cy + cz * cz); }

std::array<std::array<double, 2>, 4> BoundingBox3D::bev_corners() const {
  const double c = std::cos(yaw), s = std::sin(yaw);
  const double hx = 0.5 * dx, hy = 0.5 * dy;
  const std::array<std::array<double, 2>, 4> local = {{{hx, hy}, {-hx, hy}, {-hx, -hy}, {hx, -hy}}};
  std::array<std::array<double, 2>, 4> out{};
  for (std::size_t i = 0; i < 4; ++i) {
    out[i] = {cx + c * local[i][0] - s * local[i][1], cy + s * local[i][0] + c * local[i][1]};
  }
  return out;
}

BoundingBox3D transform_box(const BoundingBox3D& box, double rotation, double tx, double ty,
                            double tz) {
  const double c = std::cos(rotation), s = std::sin(rotation);
  return BoundingBox3D(c * box.cx - s * box.cy + tx, s * box.cx + c * box.cy + ty, box.cz + tz,
                       box.dx, box.dy, box.dz, box.yaw + rotation);
}

Point transform_point(const Point& p, double rotation, double tx, double ty, double tz) {
  const double c = std::cos(rotation), s = std::sin(rotation);
  return {c * p.x - s * p.y + tx, s * p.x + c * p.y + ty, p.z + tz, p.intensity, p.elongation};
}

double viewing_angle(const BoundingBox3D& box) {
  if (box.cx == 0.0 && box.cy == 0.0) return box.yaw;
  return wrap_angle(box.yaw - std::atan2(box.cy, box.cx));
}

std::array<double, 2> angle_encode(double theta) { return {std::cos(theta), std::sin(theta)}; }

BoxFrame::BoxFrame(const BoundingBox3D& box)
    : cx_(box.cx),
      cy_(box.cy),
      cz_(box.cz),
      cos_(std::cos(box.yaw)),
      sin_(std::sin(box.yaw)),
      hx_(0.5 * box.dx),
      hy_(0.5 * box.dy),
      hz_(0.5 * box.dz),
      inv_dx_(1.0 / box.dx),
      inv_dy_(1.0 / box.dy),
      inv_dz_(1.0 / box.dz) {}

std::vector<Point> points_in_box(std::span<const Point> points, const BoundingBox3D& box) {
  const BoxFrame frame(box);
  std::vector<Point> out;
  for (const Point& p : points) {
    if (frame.contains(p.x, p.y, p.z)) out.push_back(p);
  }
  return out;
}

std::vector<std::uint32_t> points_in_box_indices(std::span<const Point> points,
                                                 const BoundingBox3D& box) {
  const BoxFrame frame(box);
  std::vector<std::uint32_t> out;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (frame.contains(points[i].x, points[i].y, points[i].z)) {
      out.push_back(static_cast<std::uint32_t>(i));
    }
  }
  return out;
}

std::vector<Point> canonicalize(std::span<const Point> points, const BoundingBox3D& box) {
  const BoxFrame frame(box);
  std::vector<Point> out;
  out.reserve(points.size());
  for (const Point& p : points) {
    const auto c = frame.to_canonical(p.x, p.y, p.z);
    out.push_back({c[0], c[1], c[2], p.intensity, p.elongation});
  }
  return out;
}

ChannelSet::ChannelSet(std::vector<StatChannel> channels) : channels_(std::move(channels)) {
  for (std::size_t i = 0; i < channels_.size(); ++i) {
    for (std::size_t j = i + 1; j < channels_.size(); ++j) {
      if (channels_[i] == channels_[j]) throw std::invalid_argument("duplicate stat channel");
    }
  }
}

ChannelSet ChannelSet::all() {
  return ChannelSet({StatChannel::kX, StatChannel::kY, StatChannel::kZ, StatChannel::kIntensity,
                     StatChannel::kElongation});
}

ChannelSet ChannelSet::spatial() {
  return ChannelSet({StatChannel::kX, StatChannel::kY, StatChannel::kZ});
}

ChannelSet ChannelSet::from_mask(std::uint8_t mask) {
  std::vector<StatChannel> ch;
  for (std::uint8_t i = 0; i < 5; ++i) {
    if (mask & (1u << i)) ch.push_back(static_cast<StatChannel>(i));
  }
  return ChannelSet(std::move(ch));
}

bool ChannelSet::contains(StatChannel c) const {
  return std::find(channels_.begin(), channels_.end(), c) != channels_.end();
}

std::uint8_t ChannelSet::mask() const {
  std::uint8_t m = 0;
  for (auto c : channels_) m |= static_cast<std::uint8_t>(1u << static_cast<unsigned>(c));
  return m;
}

ChannelSet ChannelSet::without(StatChannel c) const {
  std::vector<StatChannel> ch;
  for (auto x : channels_) {
    if (x != c) ch.push_back(x);
  }
  return ChannelSet(std::move(ch));
}

double channel_value(const Point& p, StatChannel c) {
  switch (c) {
    case StatChannel::kX: return p.x;
    case StatChannel::kY: return p.y;
    case StatChannel::kZ: return p.z;
    case StatChannel::kIntensity: return p.intensity;
    case StatChannel::kElongation: return p.elongation;
  }
  return 0.0;
}

PointStats point_statistics(std::span<const Point> canonical_points, const ChannelSet& channels) {
  PointStats stats;
  stats.channels.assign(channels.size(), ChannelStats{});
  stats.point_count = canonical_points.size();
  if (canonical_points.empty()) return stats;

  const double n = static_cast<double>(canonical_points.size());
  for (std::size_t k = 0; k < channels.size(); ++k) {
    const StatChannel c = channels.channels()[k];
    double sum = 0.0, lo = channel_value(canonical_points[0], c), hi = lo;
    for (const Point& p : canonical_points) {
      const double v = channel_value(p, c);
      sum += v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const double mean = std::clamp(sum / n, lo, hi);
    double ss = 0.0;
    for (const Point& p : canonical_points) {
      const double d = channel_value(p, c) - mean;
      ss += d * d;
    }
    stats.channels[k] = {mean, std::sqrt(ss / n), lo, hi};
  }
  return stats;
}

double polygon_area(std::span<const std::array<double, 2>> polygon) {
  double twice = 0.0;
  const std::size_t n = polygon.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = polygon[i];
    const auto& q = polygon[(i + 1) % n];
    twice += p[0] * q[1] - q[0] * p[1];
  }
  return 0.5 * std::abs(twice);
}

double bev_overlap_area(const BoundingBox3D& a, const BoundingBox3D& b) {
  const auto [first, second] = ordered(a, b);
  // Circumscribed-circle rejection.
  const double ddx = first->cx - second->cx, ddy = first->cy - second->cy;
  const double ra = 0.5 * std::hypot(first->dx, first->dy);
  const double rb = 0.5 * std::hypot(second->dx, second->dy);
  if (ddx * ddx + ddy * ddy > (ra + rb) * (ra + rb)) return 0.0;
  return clip_area(*first, *second);
}

double iou3d(const BoundingBox3D& a, const BoundingBox3D& b) {
  const auto [first, second] = ordered(a, b);
  const double z_lo = std::max(first->cz - 0.5 * first->dz, second->cz - 0.5 * second->dz);
  const double z_hi = std::min(first->cz + 0.5 * first->dz, second->cz + 0.5 * second->dz);
  const double z_overlap = z_hi - z_lo;
  if (z_overlap <= 0.0) return 0.0;
  const double area = bev_overlap_area(*first, *second);
  if (area <= 0.0) return 0.0;
  const double inter = area * z_overlap;
  const double uni = first->volume() + second->volume() - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

}  // namespace gace
