#include "gace/synth.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "gace/point_index.hpp"

namespace gace {

namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}
double normal(Rng& rng, double mean, double stddev) {
  return std::normal_distribution<double>(mean, stddev)(rng);
}
bool bernoulli(Rng& rng, double p) {
  if (p <= 0.0) return false;
  if (p >= 1.0) return true;
  return std::bernoulli_distribution(p)(rng);
}
int poisson(Rng& rng, double mean) {
  if (!(mean > 0.0)) return 0;
  return std::poisson_distribution<int>(mean)(rng);
}
double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

bool probability(double p) { return p >= 0.0 && p <= 1.0; }

/// Unlabeled scene objects. Ghosts are multipath copies of vehicles.
enum class Material { kVehicle, kPedestrian, kCyclist, kWall, kPole, kVegetation };

struct Surface {
  double intensity_mean, intensity_std;
  double elongation_mean, elongation_std;
};

Surface surface_of(Material m, bool rear_face) {
  switch (m) {
    case Material::kVehicle:
      return rear_face ? Surface{0.75, 0.08, 0.08, 0.03} : Surface{0.30, 0.08, 0.08, 0.03};
    case Material::kPedestrian: return {0.20, 0.06, 0.15, 0.05};
    case Material::kCyclist: return {0.35, 0.10, 0.12, 0.05};
    case Material::kWall: return {0.45, 0.10, 0.10, 0.03};
    case Material::kPole: return {0.55, 0.10, 0.10, 0.03};
    case Material::kVegetation: return {0.12, 0.05, 0.55, 0.15};
  }
  return {0.3, 0.1, 0.1, 0.03};
}

Material material_of(SynthClass cls) {
  switch (cls) {
    case kVehicle: return Material::kVehicle;
    case kPedestrian: return Material::kPedestrian;
    case kCyclist: return Material::kCyclist;
  }
  return Material::kVehicle;
}

Point make_point(double x, double y, double z, const Surface& s, std::uint32_t channels, Rng& rng) {
  Point p{x, y, z, clamp01(normal(rng, s.intensity_mean, s.intensity_std)), 0.0};
  const double e = clamp01(normal(rng, s.elongation_mean, s.elongation_std));
  if (channels >= 5) p.elongation = e;
  return p;
}

/// Returns on the sensor-facing sides and top of a box, slightly inside the surface.
std::vector<Point> surface_points(const BoundingBox3D& box, Material material,
                                  const SceneConfig& cfg, Rng& rng) {
  std::vector<Point> out;
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  const double hx = box.dx / 2, hy = box.dy / 2, hz = box.dz / 2;
  struct Face {
    double nx, ny, nz;  // outward normal in box-local coordinates
    double area;
  };
  const Face faces[] = {{1, 0, 0, box.dy * box.dz},  {-1, 0, 0, box.dy * box.dz},
                        {0, 1, 0, box.dx * box.dz},  {0, -1, 0, box.dx * box.dz},
                        {0, 0, 1, box.dx * box.dy}};
  for (const Face& f : faces) {
    // Face center in local then world coordinates.
    const double lx = f.nx * hx, ly = f.ny * hy, lz = f.nz * hz;
    const double wx = box.cx + c * lx - s * ly, wy = box.cy + s * lx + c * ly, wz = box.cz + lz;
    const double range = std::sqrt(wx * wx + wy * wy + wz * wz);
    const double nwx = c * f.nx - s * f.ny, nwy = s * f.nx + c * f.ny, nwz = f.nz;
    const double cosine = -(nwx * wx + nwy * wy + nwz * wz) / std::max(range, 1e-9);
    if (cosine <= 0.0) continue;
    const double r = std::max(range, 1.0);
    const int n = poisson(rng, cfg.point_density * f.area * cosine / (r * r));
    const Surface surf = surface_of(material, f.nx < 0.0);
    for (int k = 0; k < n; ++k) {
      const double depth = std::min(std::abs(normal(rng, 0.0, 0.02)), 0.1);
      double px = f.nx != 0.0 ? f.nx * (hx - std::min(depth, hx)) : uniform(rng, -hx, hx);
      double py = f.ny != 0.0 ? f.ny * (hy - std::min(depth, hy)) : uniform(rng, -hy, hy);
      double pz = f.nz != 0.0 ? f.nz * (hz - std::min(depth, hz)) : uniform(rng, -hz, hz);
      out.push_back(make_point(box.cx + c * px - s * py, box.cy + s * px + c * py, box.cz + pz,
                               surf, cfg.channels, rng));
    }
  }
  return out;
}

/// Volumetric returns for vegetation: count follows the same law as the facing surfaces.
std::vector<Point> volume_points(const BoundingBox3D& box, const SceneConfig& cfg, Rng& rng) {
  const double range = std::max(box.range(), 1.0);
  const double facing = std::max(box.dx, box.dy) * box.dz;
  const int n = poisson(rng, cfg.point_density * facing / (range * range));
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  const Surface surf = surface_of(Material::kVegetation, false);
  std::vector<Point> out;
  for (int k = 0; k < n; ++k) {
    const double px = uniform(rng, -box.dx / 2, box.dx / 2);
    const double py = uniform(rng, -box.dy / 2, box.dy / 2);
    const double pz = uniform(rng, -box.dz / 2, box.dz / 2);
    out.push_back(make_point(box.cx + c * px - s * py, box.cy + s * px + c * py, box.cz + pz, surf,
                             cfg.channels, rng));
  }
  return out;
}

struct SceneObject {
  BoundingBox3D box;
  Material material;
  bool labeled;
  std::uint32_t class_id;
  std::vector<Point> points;
  // Azimuth extent relative to the center azimuth, and nearest BEV corner distance.
  double az_center = 0.0, az_lo = 0.0, az_hi = 0.0, near_range = 0.0;
};

void compute_extent(SceneObject& o) {
  o.az_center = std::atan2(o.box.cy, o.box.cx);
  o.az_lo = 0.0;
  o.az_hi = 0.0;
  o.near_range = std::hypot(o.box.cx, o.box.cy);
  for (const auto& corner : o.box.bev_corners()) {
    const double rel = wrap_angle(std::atan2(corner[1], corner[0]) - o.az_center);
    o.az_lo = std::min(o.az_lo, rel);
    o.az_hi = std::max(o.az_hi, rel);
    o.near_range = std::min(o.near_range, std::hypot(corner[0], corner[1]));
  }
}

/// True if the ray from the sensor to p passes through the object's shadow volume.
bool shadowed_by(const Point& p, const SceneObject& o) {
  const double pr = std::hypot(p.x, p.y);
  if (pr <= o.near_range + 0.1) return false;
  const double rel = wrap_angle(std::atan2(p.y, p.x) - o.az_center);
  if (rel < o.az_lo || rel > o.az_hi) return false;
  const double center_range = std::hypot(o.box.cx, o.box.cy);
  if (pr <= center_range) return false;
  const double ray_z = p.z * o.near_range / pr;
  return ray_z >= o.box.cz - o.box.dz / 2 && ray_z <= o.box.cz + o.box.dz / 2;
}

BoundingBox3D sample_class_box(SynthClass cls, double cx, double cy, double yaw,
                               const SceneConfig& cfg, Rng& rng) {
  double l, w, h;
  switch (cls) {
    case kVehicle:
      if (bernoulli(rng, cfg.long_vehicle_fraction)) {
        l = uniform(rng, 6.0, 13.0);
        w = uniform(rng, 2.3, 2.6);
        h = uniform(rng, 2.8, 3.8);
      } else {
        l = uniform(rng, 4.0, 5.0);
        w = uniform(rng, 1.75, 2.0);
        h = uniform(rng, 1.4, 1.7);
      }
      break;
    case kPedestrian:
      l = uniform(rng, 0.6, 0.95);
      w = uniform(rng, 0.55, 0.8);
      h = uniform(rng, 1.55, 1.95);
      break;
    case kCyclist:
    default:
      l = uniform(rng, 1.6, 1.9);
      w = uniform(rng, 0.5, 0.7);
      h = uniform(rng, 1.6, 1.9);
      break;
  }
  return BoundingBox3D(cx, cy, cfg.ground_z + h / 2, l, w, h, yaw);
}

class Placer {
 public:
  explicit Placer(const SceneConfig& cfg) : cfg_(cfg) {}

  bool fits(const BoundingBox3D& b) const {
    const double r = std::hypot(b.cx, b.cy);
    if (r < cfg_.min_range || r > cfg_.fov_radius) return false;
    BoundingBox3D grown = b;
    grown.dx += 0.4;
    grown.dy += 0.4;
    for (const auto& o : placed_) {
      if (bev_overlap_area(grown, o) > 0.0) return false;
    }
    return true;
  }
  void add(const BoundingBox3D& b) { placed_.push_back(b); }

  std::array<double, 2> random_position(Rng& rng) const {
    const double r = uniform(rng, cfg_.min_range, cfg_.fov_radius);
    const double az = uniform(rng, -kPi, kPi);
    return {r * std::cos(az), r * std::sin(az)};
  }

 private:
  const SceneConfig& cfg_;
  std::vector<BoundingBox3D> placed_;
};

constexpr int kPlacementRetries = 30;

void place_labeled(SynthClass cls, int count, const SceneConfig& cfg, Placer& placer,
                   std::vector<SceneObject>& objects, Rng& rng) {
  int placed = 0, failures = 0;
  while (placed < count && failures < kPlacementRetries * std::max(count, 1)) {
    const bool group = cls != kCyclist && bernoulli(rng, cfg.grouping_rate);
    const int members = group ? std::uniform_int_distribution<int>(2, cls == kVehicle ? 4 : 5)(rng) : 1;
    const auto anchor = placer.random_position(rng);
    const double heading = uniform(rng, -kPi, kPi);
    double along = 0.0;
    double prev_half = 0.0;
    bool any = false;
    for (int m = 0; m < members && placed < count; ++m) {
      double cx = anchor[0], cy = anchor[1], yaw = heading;
      BoundingBox3D box;
      if (cls == kVehicle) {
        // Convoy: same lane and heading, 6-12 m bumper gaps.
        box = sample_class_box(cls, 0.0, 0.0, yaw, cfg, rng);
        if (m > 0) along += prev_half + uniform(rng, 6.0, 12.0) + box.dx / 2;
        prev_half = box.dx / 2;
        cx += along * std::cos(heading);
        cy += along * std::sin(heading);
        box = BoundingBox3D(cx, cy, box.cz, box.dx, box.dy, box.dz, yaw);
      } else {
        if (m > 0) {
          const double rr = uniform(rng, 0.8, 3.0), aa = uniform(rng, -kPi, kPi);
          cx += rr * std::cos(aa);
          cy += rr * std::sin(aa);
          yaw = wrap_angle(heading + normal(rng, 0.0, 0.4));
        }
        box = sample_class_box(cls, cx, cy, yaw, cfg, rng);
      }
      if (!placer.fits(box)) {
        ++failures;
        continue;
      }
      placer.add(box);
      objects.push_back({box, material_of(cls), true, cls, {}});
      ++placed;
      any = true;
    }
    if (!any) ++failures;
  }
  if (placed < count) {
    std::fprintf(stderr, "synth: placed %d of %d objects of class %u after bounded retries\n",
                 placed, count, static_cast<unsigned>(cls));
  }
}

void place_clutter(Material material, int count, const SceneConfig& cfg, Placer& placer,
                   std::vector<SceneObject>& objects, Rng& rng) {
  for (int k = 0; k < count; ++k) {
    for (int attempt = 0; attempt < kPlacementRetries; ++attempt) {
      const auto pos = placer.random_position(rng);
      const double yaw = uniform(rng, -kPi, kPi);
      double l, w, h;
      switch (material) {
        case Material::kWall:
          l = uniform(rng, 6.0, 13.0);
          w = uniform(rng, 0.2, 0.35);
          h = uniform(rng, 1.2, 2.5);
          break;
        case Material::kPole:
          l = w = uniform(rng, 0.2, 0.35);
          h = uniform(rng, 2.5, 4.5);
          break;
        default:
          l = uniform(rng, 1.2, 3.5);
          w = uniform(rng, 1.0, 2.5);
          h = uniform(rng, 0.8, 2.0);
          break;
      }
      const BoundingBox3D box(pos[0], pos[1], cfg.ground_z + h / 2, l, w, h, yaw);
      if (!placer.fits(box)) continue;
      placer.add(box);
      objects.push_back({box, material, false, 0, {}});
      break;
    }
  }
}

std::vector<Point> ground_returns(const SceneConfig& cfg, Rng& rng) {
  const int n = poisson(rng, cfg.ground_points);
  std::vector<Point> out;
  out.reserve(static_cast<std::size_t>(n));
  const double ratio = cfg.fov_radius / cfg.min_range;
  for (int k = 0; k < n; ++k) {
    // Range density proportional to 1/r, as for rings of a spinning sensor.
    const double r = cfg.min_range * std::pow(ratio, uniform(rng, 0.0, 1.0));
    const double az = uniform(rng, -kPi, kPi);
    Point p{r * std::cos(az), r * std::sin(az), cfg.ground_z - std::abs(normal(rng, 0.0, 0.03)),
            uniform(rng, 0.05, 0.3), 0.0};
    if (cfg.channels >= 5) p.elongation = uniform(rng, 0.0, 0.1);
    out.push_back(p);
  }
  return out;
}

void drop_azimuth_slice(SceneObject& o, Rng& rng) {
  const double width = o.az_hi - o.az_lo;
  const double frac = uniform(rng, 0.25, 0.75);
  const double start = o.az_lo + uniform(rng, 0.0, 1.0 - frac) * width;
  const double stop = start + frac * width;
  std::erase_if(o.points, [&](const Point& p) {
    const double rel = wrap_angle(std::atan2(p.y, p.x) - o.az_center);
    return rel >= start && rel <= stop;
  });
}

// Canonical extents a detector assumes for each class.
constexpr std::array<std::array<double, 3>, kSynthClassCount> kPriorDims{
    {{4.5, 1.9, 1.55}, {0.75, 0.68, 1.75}, {1.75, 0.6, 1.75}}};

BoundingBox3D jitter_box(const BoundingBox3D& b, const DetectorErrorModel& m, Rng& rng) {
  const double f = m.jitter_center_frac;
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const double along = f > 0.0 ? normal(rng, 0.0, f * b.dx) : 0.0;
  const double across = f > 0.0 ? normal(rng, 0.0, f * b.dy) : 0.0;
  const double up = f > 0.0 ? normal(rng, 0.0, f * b.dz) : 0.0;
  auto scale = [&](double d) {
    return m.jitter_dim_frac > 0.0 ? d * std::exp(normal(rng, 0.0, m.jitter_dim_frac)) : d;
  };
  const double dx = scale(b.dx), dy = scale(b.dy), dz = scale(b.dz);
  const double yaw = m.jitter_yaw > 0.0 ? b.yaw + normal(rng, 0.0, m.jitter_yaw) : b.yaw;
  return BoundingBox3D(b.cx + along * c - across * s, b.cy + along * s + across * c, b.cz + up, dx,
                       dy, dz, yaw);
}

double score_from_logit(double logit) { return clamp01(logistic(logit)); }

double count_term(const DetectorErrorModel& m, std::size_t n) {
  return m.tp_count_slope * (std::log1p(static_cast<double>(n)) - std::log1p(50.0));
}

/// Connected components of non-ground points on a BEV grid.
std::vector<std::vector<std::uint32_t>> cluster_points(std::span<const Point> pts,
                                                        const std::vector<std::uint8_t>& usable,
                                                        double cell) {
  std::vector<std::uint32_t> idx;
  for (std::uint32_t i = 0; i < pts.size(); ++i) {
    if (usable[i]) idx.push_back(i);
  }
  std::vector<std::vector<std::uint32_t>> clusters;
  if (idx.empty()) return clusters;
  auto key = [&](const Point& p) {
    return std::pair<std::int64_t, std::int64_t>{static_cast<std::int64_t>(std::floor(p.x / cell)),
                                                 static_cast<std::int64_t>(std::floor(p.y / cell))};
  };
  // Sort points by cell, then union-find over occupied cells.
  std::vector<std::pair<std::pair<std::int64_t, std::int64_t>, std::uint32_t>> keyed;
  keyed.reserve(idx.size());
  for (auto i : idx) keyed.push_back({key(pts[i]), i});
  std::sort(keyed.begin(), keyed.end());
  std::vector<std::pair<std::int64_t, std::int64_t>> cells;
  std::vector<std::size_t> cell_of(keyed.size());
  for (std::size_t k = 0; k < keyed.size(); ++k) {
    if (cells.empty() || cells.back() != keyed[k].first) cells.push_back(keyed[k].first);
    cell_of[k] = cells.size() - 1;
  }
  std::vector<std::size_t> parent(cells.size());
  for (std::size_t k = 0; k < parent.size(); ++k) parent[k] = k;
  auto find = [&](std::size_t a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  for (std::size_t k = 0; k < cells.size(); ++k) {
    for (std::int64_t ox = -1; ox <= 1; ++ox) {
      for (std::int64_t oy = -1; oy <= 1; ++oy) {
        const std::pair<std::int64_t, std::int64_t> nb{cells[k].first + ox, cells[k].second + oy};
        const auto it = std::lower_bound(cells.begin(), cells.end(), nb);
        if (it == cells.end() || *it != nb) continue;
        const std::size_t a = find(k), b = find(static_cast<std::size_t>(it - cells.begin()));
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
      }
    }
  }
  std::vector<std::int64_t> slot(cells.size(), -1);
  for (std::size_t k = 0; k < keyed.size(); ++k) {
    const std::size_t root = find(cell_of[k]);
    if (slot[root] < 0) {
      slot[root] = static_cast<std::int64_t>(clusters.size());
      clusters.emplace_back();
    }
    clusters[static_cast<std::size_t>(slot[root])].push_back(keyed[k].second);
  }
  for (auto& c : clusters) std::sort(c.begin(), c.end());
  return clusters;
}

struct ClusterShape {
  double cx, cy, yaw, length, width, z_lo, z_hi, elongation;
};

/// Minimum-area bounding rectangle over 1-degree yaw steps; yaw follows the longer side.
ClusterShape fit_cluster(std::span<const Point> pts, const std::vector<std::uint32_t>& members) {
  double mx = 0, my = 0, me = 0, z_lo = 1e300, z_hi = -1e300;
  for (auto i : members) {
    mx += pts[i].x;
    my += pts[i].y;
    me += pts[i].elongation;
    z_lo = std::min(z_lo, pts[i].z);
    z_hi = std::max(z_hi, pts[i].z);
  }
  const double n = static_cast<double>(members.size());
  mx /= n;
  my /= n;
  me /= n;
  double best_area = 1e300, best_yaw = 0.0;
  std::array<double, 4> best_ext{};
  for (int step = 0; step < 90; ++step) {
    const double yaw = step * kPi / 180.0;
    const double c = std::cos(yaw), s = std::sin(yaw);
    double u_lo = 1e300, u_hi = -1e300, v_lo = 1e300, v_hi = -1e300;
    for (auto i : members) {
      const double dx = pts[i].x - mx, dy = pts[i].y - my;
      const double u = c * dx + s * dy, v = -s * dx + c * dy;
      u_lo = std::min(u_lo, u);
      u_hi = std::max(u_hi, u);
      v_lo = std::min(v_lo, v);
      v_hi = std::max(v_hi, v);
    }
    const double area = (u_hi - u_lo) * (v_hi - v_lo);
    if (area < best_area) {
      best_area = area;
      best_yaw = yaw;
      best_ext = {u_lo, u_hi, v_lo, v_hi};
    }
  }
  double yaw = best_yaw;
  double uc = (best_ext[0] + best_ext[1]) / 2, vc = (best_ext[2] + best_ext[3]) / 2;
  double length = best_ext[1] - best_ext[0], width = best_ext[3] - best_ext[2];
  const double c = std::cos(yaw), s = std::sin(yaw);
  const double cx = mx + c * uc - s * vc, cy = my + s * uc + c * vc;
  if (width > length) {
    std::swap(length, width);
    yaw = wrap_angle(yaw + kPi / 2);
  }
  return {cx, cy, yaw, length, width, z_lo, z_hi, me};
}

/// Amodal completion: grows the fitted footprint to at least the class prior, pushing the
/// missing extent away from the sensor.
BoundingBox3D complete_box(const ClusterShape& s, double length, double width, double height,
                           double ground) {
  const double c = std::cos(s.yaw), sn = std::sin(s.yaw);
  const double grow_u = std::max(0.0, length - s.length) / 2;
  const double grow_v = std::max(0.0, width - s.width) / 2;
  // Sensor direction seen from the cluster, in cluster axes.
  const double su = -(c * s.cx + sn * s.cy), sv = -(-sn * s.cx + c * s.cy);
  const double du = su > 0 ? -grow_u : grow_u, dv = sv > 0 ? -grow_v : grow_v;
  const double l = std::max(length, s.length), w = std::max(width, s.width);
  const double h = std::max(height, s.z_hi - ground);
  return BoundingBox3D(s.cx + c * du - sn * dv, s.cy + sn * du + c * dv, ground + h / 2, l, w, h,
                       s.yaw);
}

}  // namespace

const std::vector<std::string>& synth_class_names() {
  static const std::vector<std::string> names{"Vehicle", "Pedestrian", "Cyclist"};
  return names;
}

void SceneConfig::validate() const {
  bool ok = fov_radius > min_range && min_range > 0.0 && point_density >= 0.0 &&
            ground_points >= 0.0 && probability(long_vehicle_fraction) &&
            probability(occlusion_rate) && probability(grouping_rate) && probability(ghost_rate) &&
            (channels == 4 || channels == 5);
  for (double m : mean_objects) ok = ok && m >= 0.0;
  for (double m : mean_clutter) ok = ok && m >= 0.0;
  if (!ok) throw std::invalid_argument("invalid scene configuration");
}

void DetectorErrorModel::validate() const {
  bool ok = probability(min_detect_prob) && probability(confusion_prob) &&
            probability(wall_fp_prob) && probability(pole_fp_prob) &&
            probability(vegetation_fp_prob) && probability(ghost_fp_prob) &&
            jitter_center_frac >= 0.0 && jitter_dim_frac >= 0.0 && jitter_yaw >= 0.0 &&
            score_noise >= 0.0 && mean_empty_fps >= 0.0 && detect_mid_points >= 0.0 &&
            duplicate_long_band_mult >= 0.0 && duplicate_axial_view_mult >= 0.0;
  for (double p : heading_flip_prob) ok = ok && probability(p);
  for (double p : duplicate_prob) ok = ok && probability(p);
  if (!ok) throw std::invalid_argument("invalid detector error model");
}

DetectorErrorModel DetectorErrorModel::perfect() {
  DetectorErrorModel m;
  m.name = "perfect";
  m.min_detect_prob = 1.0;
  m.jitter_center_frac = m.jitter_dim_frac = m.jitter_yaw = 0.0;
  m.heading_flip_prob = {0.0, 0.0, 0.0};
  m.duplicate_prob = {0.0, 0.0, 0.0};
  m.confusion_prob = m.wall_fp_prob = m.pole_fp_prob = m.vegetation_fp_prob = 0.0;
  m.ghost_fp_prob = m.mean_empty_fps = 0.0;
  return m;
}

DetectorErrorModel error_model_a() { return DetectorErrorModel{}; }

DetectorErrorModel error_model_b() {
  DetectorErrorModel m;
  m.name = "B";
  m.detect_mid_points = 12.0;
  m.detect_slope = 2.0;
  m.jitter_center_frac = 0.04;
  m.jitter_dim_frac = 0.04;
  m.jitter_yaw = 0.05;
  m.heading_flip_prob = {0.05, 0.2, 0.1};
  m.tp_logit_mean = 1.0;
  m.tp_count_slope = 0.25;
  m.quality_gain = 2.0;
  m.fp_logit_mean = 0.8;
  m.score_noise = 1.2;
  m.duplicate_prob = {0.15, 0.08, 0.12};
  m.duplicate_long_band_mult = 2.0;
  m.duplicate_axial_view_mult = 2.5;
  m.confusion_prob = 0.2;
  m.wall_fp_prob = 0.6;
  m.pole_fp_prob = 0.6;
  m.vegetation_fp_prob = 0.5;
  m.ghost_fp_prob = 0.5;
  m.mean_empty_fps = 3.0;
  return m;
}

DetectorErrorModel error_model_by_name(const std::string& name) {
  std::string n;
  for (char ch : name) n.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(ch))));
  if (n == "A") return error_model_a();
  if (n == "B") return error_model_b();
  throw std::invalid_argument("unknown error model '" + name + "' (expected A or B)");
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index, std::uint64_t stream) {
  auto mix = [](std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  };
  return mix(mix(mix(seed) ^ index) ^ (stream * 0xd6e8feb86659fd93ull));
}

std::string synth_frame_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%06zu", index);
  return buf;
}

std::vector<Point> sample_object_points(const BoundingBox3D& box, SynthClass cls,
                                        const SceneConfig& cfg, std::mt19937_64& rng) {
  return surface_points(box, material_of(cls), cfg, rng);
}

Frame generate_scene(const SceneConfig& cfg, std::size_t index) {
  cfg.validate();
  Rng rng(stream_seed(cfg.seed, index, 0));
  Frame frame;
  frame.frame_id = synth_frame_id(index);
  frame.channels = cfg.channels;
  frame.ground_truth.emplace();

  Placer placer(cfg);
  std::vector<SceneObject> objects;
  for (std::uint32_t c = 0; c < kSynthClassCount; ++c) {
    place_labeled(static_cast<SynthClass>(c), poisson(rng, cfg.mean_objects[c]), cfg, placer,
                  objects, rng);
  }
  if (cfg.ground_clutter) {
    place_clutter(Material::kWall, poisson(rng, cfg.mean_clutter[0]), cfg, placer, objects, rng);
    place_clutter(Material::kPole, poisson(rng, cfg.mean_clutter[1]), cfg, placer, objects, rng);
    place_clutter(Material::kVegetation, poisson(rng, cfg.mean_clutter[2]), cfg, placer, objects,
                  rng);
  }

  for (auto& o : objects) {
    o.points = o.material == Material::kVegetation ? volume_points(o.box, cfg, rng)
                                                   : surface_points(o.box, o.material, cfg, rng);
    compute_extent(o);
    if (bernoulli(rng, cfg.occlusion_rate)) drop_azimuth_slice(o, rng);
  }
  std::vector<Point> ground;
  if (cfg.ground_clutter) ground = ground_returns(cfg, rng);

  auto visible = [&](const Point& p, const SceneObject* self) {
    for (const auto& o : objects) {
      if (&o != self && shadowed_by(p, o)) return false;
    }
    return true;
  };
  for (auto& o : objects) {
    std::erase_if(o.points, [&](const Point& p) { return !visible(p, &o); });
  }
  std::erase_if(ground, [&](const Point& p) { return !visible(p, nullptr); });

  // Multipath ghosts: thinned copies of a vehicle's returns further along its line of sight.
  std::vector<Point> ghosts;
  for (const auto& o : objects) {
    if (!o.labeled || o.class_id != kVehicle || o.points.empty()) continue;
    if (!bernoulli(rng, cfg.ghost_rate)) continue;
    const double r = std::hypot(o.box.cx, o.box.cy);
    const double shift = uniform(rng, 6.0, 9.0);
    const double ux = o.box.cx / r, uy = o.box.cy / r;
    const BoundingBox3D g(o.box.cx + shift * ux, o.box.cy + shift * uy, o.box.cz, o.box.dx,
                          o.box.dy, o.box.dz, o.box.yaw);
    if (!placer.fits(g)) continue;
    placer.add(g);
    const double keep = std::min(1.0, (r / (r + shift)) * (r / (r + shift)) * uniform(rng, 0.7, 1.3));
    for (const auto& p : o.points) {
      if (!bernoulli(rng, keep)) continue;
      Point q = p;
      q.x += shift * ux;
      q.y += shift * uy;
      ghosts.push_back(q);
    }
  }

  for (const auto& o : objects) {
    if (o.labeled) frame.ground_truth->push_back({o.box, o.class_id});
    frame.points.insert(frame.points.end(), o.points.begin(), o.points.end());
  }
  frame.points.insert(frame.points.end(), ghosts.begin(), ghosts.end());
  frame.points.insert(frame.points.end(), ground.begin(), ground.end());
  // Stored precision, so frames equal their on-disk float32 form.
  for (auto& p : frame.points) {
    p.x = static_cast<float>(p.x);
    p.y = static_cast<float>(p.y);
    p.z = static_cast<float>(p.z);
    p.intensity = static_cast<float>(p.intensity);
    p.elongation = static_cast<float>(p.elongation);
  }
  return frame;
}

std::vector<Detection> simulate_detector(const Frame& frame, const DetectorErrorModel& m,
                                         std::uint64_t seed) {
  m.validate();
  if (!frame.ground_truth) {
    throw std::invalid_argument("simulate_detector needs ground truth (frame '" + frame.frame_id + "')");
  }
  Rng rng(seed);
  const auto& gts = *frame.ground_truth;
  const IouThresholds thresholds = IouThresholds::defaults(kSynthClassCount);
  std::vector<Detection> out;
  const PointIndex index(frame.points);
  std::vector<std::uint32_t> members;

  for (const auto& gt : gts) {
    const auto cls = gt.class_id;
    index.in_box(gt.box, members);
    const std::size_t n = members.size();
    const double p_detect =
        std::max(m.min_detect_prob,
                 n == 0 ? 0.0
                        : logistic(m.detect_slope * (std::log1p(static_cast<double>(n)) -
                                                     std::log1p(m.detect_mid_points))));
    if (!bernoulli(rng, p_detect)) continue;
    BoundingBox3D box = jitter_box(gt.box, m, rng);
    if (bernoulli(rng, m.heading_flip_prob[cls])) box.yaw = wrap_angle(box.yaw + kPi);
    const double quality = iou3d(box, gt.box);
    const double tp_logit = m.tp_logit_mean + count_term(m, n) +
                            m.quality_gain * (quality - 0.75) + m.score_noise * normal(rng, 0.0, 1.0);
    out.push_back({box, cls, score_from_logit(tp_logit)});

    // Near-miss duplicate, more likely for long vehicles and axis-aligned views.
    double p_dup = m.duplicate_prob[cls];
    if (cls == kVehicle && gt.box.dx >= 6.0 && gt.box.dx <= 13.0) p_dup *= m.duplicate_long_band_mult;
    if (std::abs(std::sin(viewing_angle(gt.box))) < 0.5) p_dup *= m.duplicate_axial_view_mult;
    if (bernoulli(rng, std::min(p_dup, 1.0))) {
      const double thr = thresholds.at(cls);
      for (int attempt = 0; attempt < 8; ++attempt) {
        const bool lengthwise = bernoulli(rng, 0.6);
        const double frac = uniform(rng, 0.15, 0.45) * (bernoulli(rng, 0.5) ? 1.0 : -1.0);
        const double shift = frac * (lengthwise ? gt.box.dx : gt.box.dy);
        const double c = std::cos(gt.box.yaw), s = std::sin(gt.box.yaw);
        BoundingBox3D d = jitter_box(gt.box, m, rng);
        d.cx += lengthwise ? shift * c : -shift * s;
        d.cy += lengthwise ? shift * s : shift * c;
        const double iou = iou3d(d, gt.box);
        if (iou >= thr || iou < 0.2) continue;
        const double logit = m.fp_logit_mean + 0.4 + count_term(m, n) +
                             m.score_noise * normal(rng, 0.0, 1.0);
        out.push_back({d, cls, score_from_logit(logit)});
        break;
      }
    }
    // Pedestrian <-> cyclist confusion on the same object, with the other class's extents.
    if (cls != kVehicle && bernoulli(rng, m.confusion_prob)) {
      const std::uint32_t other = cls == kPedestrian ? kCyclist : kPedestrian;
      const auto& prior = kPriorDims[other];
      BoundingBox3D d = jitter_box(gt.box, m, rng);
      d = BoundingBox3D(d.cx, d.cy, d.cz - d.dz / 2 + prior[2] / 2, prior[0], prior[1], prior[2], d.yaw);
      const double logit = m.fp_logit_mean + count_term(m, n) + m.score_noise * normal(rng, 0.0, 1.0);
      out.push_back({d, other, score_from_logit(logit)});
    }
  }

  // Ground height: 2nd percentile of point heights.
  double ground = -1.8;
  if (!frame.points.empty()) {
    std::vector<double> zs;
    zs.reserve(frame.points.size());
    for (const auto& p : frame.points) zs.push_back(p.z);
    const std::size_t q = zs.size() / 50;
    std::nth_element(zs.begin(), zs.begin() + static_cast<std::ptrdiff_t>(q), zs.end());
    ground = zs[q];
  }

  // Unlabeled point clusters: walls, poles, vegetation and multipath ghosts.
  if (!frame.points.empty()) {
    std::vector<std::uint8_t> usable(frame.points.size(), 1);
    for (std::size_t i = 0; i < frame.points.size(); ++i) {
      if (frame.points[i].z < ground + 0.25) usable[i] = 0;
    }
    for (const auto& gt : gts) {
      BoundingBox3D grown(gt.box.cx, gt.box.cy, gt.box.cz, gt.box.dx + 0.6, gt.box.dy + 0.6,
                          gt.box.dz + 0.6, gt.box.yaw);
      index.in_box(grown, members);
      for (auto i : members) usable[i] = 0;
    }
    for (const auto& cluster : cluster_points(frame.points, usable, 0.6)) {
      if (cluster.size() < 5) continue;
      const ClusterShape s = fit_cluster(frame.points, cluster);
      const double height = s.z_hi - ground;
      const double logit_base = m.fp_logit_mean + count_term(m, cluster.size()) +
                                m.score_noise * normal(rng, 0.0, 1.0);
      if (s.length < 0.7 && s.width < 0.7 && height > 1.5) {
        if (!bernoulli(rng, m.pole_fp_prob)) continue;
        const auto& p = kPriorDims[kPedestrian];
        out.push_back({BoundingBox3D(s.cx, s.cy, ground + p[2] / 2, p[0], p[1], p[2],
                                     uniform(rng, -kPi, kPi)),
                       kPedestrian, score_from_logit(logit_base)});
      } else if (s.length >= 5.0 && s.width < 0.6) {
        if (!bernoulli(rng, m.wall_fp_prob)) continue;
        const BoundingBox3D b =
            complete_box(s, s.length, uniform(rng, 2.3, 2.6), uniform(rng, 2.8, 3.6), ground);
        out.push_back({b, kVehicle, score_from_logit(logit_base + 0.5)});
      } else if (s.elongation > 0.35) {
        if (!bernoulli(rng, m.vegetation_fp_prob)) continue;
        const std::uint32_t cls = s.length > 2.5 ? kVehicle : kCyclist;
        const auto& p = kPriorDims[cls];
        out.push_back({complete_box(s, p[0], p[1], p[2], ground), cls,
                       score_from_logit(logit_base - 0.3)});
      } else if (s.length >= 1.5) {
        if (!bernoulli(rng, m.ghost_fp_prob)) continue;
        const auto& p = kPriorDims[kVehicle];
        out.push_back({complete_box(s, p[0], p[1], p[2], ground), kVehicle,
                       score_from_logit(logit_base + 0.3)});
      }
    }
  }

  // Boxes in empty space.
  const int empties = poisson(rng, m.mean_empty_fps);
  for (int k = 0; k < empties; ++k) {
    const double r = uniform(rng, 5.0, 70.0), az = uniform(rng, -kPi, kPi);
    const double u = uniform(rng, 0.0, 1.0);
    const std::uint32_t cls = u < 0.5 ? kVehicle : (u < 0.8 ? kPedestrian : kCyclist);
    const auto& p = kPriorDims[cls];
    const double logit = m.fp_logit_mean - 0.5 + m.score_noise * normal(rng, 0.0, 1.0);
    out.push_back({BoundingBox3D(r * std::cos(az), r * std::sin(az), ground + p[2] / 2, p[0], p[1],
                                 p[2], uniform(rng, -kPi, kPi)),
                   cls, score_from_logit(logit)});
  }
  return out;
}

Frame generate_frame(const SceneConfig& cfg, const DetectorErrorModel& model, std::size_t index) {
  Frame f = generate_scene(cfg, index);
  f.detections = simulate_detector(f, model, stream_seed(cfg.seed, index, 1));
  return f;
}

BenchmarkPreset bench_v1(std::uint64_t seed) {
  BenchmarkPreset p;
  p.name = "bench-v1";
  p.train.seed = stream_seed(seed, 0, 100);
  p.train.frames = 400;
  p.eval = p.train;
  p.eval.seed = stream_seed(seed, 1, 100);
  p.eval.frames = 100;
  p.detector = error_model_a();
  return p;
}

SceneConfig throughput_scene(std::uint64_t seed) {
  SceneConfig c;
  c.seed = seed;
  c.frames = 20;
  c.mean_objects = {140.0, 75.0, 22.0};
  c.fov_radius = 80.0;
  c.mean_clutter = {5.0, 10.0, 10.0};
  c.point_density = 30000.0;
  c.ground_points = 135000.0;
  return c;
}

}  // namespace gace
