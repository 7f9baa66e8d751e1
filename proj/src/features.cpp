#include "gace/features.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <string>

namespace gace {

namespace {

double clamp_unit(double v) { return std::clamp(v, -1.0, 1.0); }

class Fnv1a {
 public:
  void add_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= p[i];
      h_ *= 1099511628211ull;
    }
  }
  void add(double v) { add_bytes(&v, sizeof v); }
  void add(std::uint64_t v) { add_bytes(&v, sizeof v); }
  std::uint64_t value() const { return h_; }

 private:
  std::uint64_t h_ = 14695981039346656037ull;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void check_class(std::uint32_t class_id, const NormConfig& cfg) {
  if (class_id >= cfg.class_count) {
    throw std::invalid_argument("class id " + std::to_string(class_id) + " outside class count " +
                                std::to_string(cfg.class_count));
  }
}

void write_instance(const Detection& det, const PointStats& stats, std::size_t point_count,
                    const NormConfig& cfg, std::span<double> out) {
  check_class(det.class_id, cfg);
  const BoundingBox3D& b = det.box;
  std::fill(out.begin(), out.end(), 0.0);
  out[slot::kCx] = b.cx / cfg.max_range;
  out[slot::kCy] = b.cy / cfg.max_range;
  out[slot::kCz] = (b.cz - cfg.z_lo) / (cfg.z_hi - cfg.z_lo);
  out[slot::kDx] = b.dx / cfg.max_dims[0];
  out[slot::kDy] = b.dy / cfg.max_dims[1];
  out[slot::kDz] = b.dz / cfg.max_dims[2];
  const auto yaw = angle_encode(b.yaw);
  out[slot::kCosYaw] = yaw[0];
  out[slot::kSinYaw] = yaw[1];
  out[slot::kScore] = det.score;
  const auto alpha = angle_encode(viewing_angle(b));
  out[slot::kCosAlpha] = alpha[0];
  out[slot::kSinAlpha] = alpha[1];
  out[slot::kRange] = b.range() / cfg.max_range;
  out[slot::kCount] =
      std::min(static_cast<double>(point_count), cfg.max_points) / cfg.max_points;

  const std::size_t nc = stats.channels.size();
  for (std::size_t k = 0; k < nc; ++k) {
    const ChannelStats& s = stats.channels[k];
    out[slot::kStatsBegin + k] = s.mean;
    out[slot::kStatsBegin + nc + k] = s.std;
    out[slot::kStatsBegin + 2 * nc + k] = s.min;
    out[slot::kStatsBegin + 3 * nc + k] = s.max;
  }
  out[slot::kStatsBegin + 4 * nc + det.class_id] = 1.0;
  for (double& v : out) v = clamp_unit(v);
}

}  // namespace

void NormConfig::validate() const {
  const bool ok = max_range > 0.0 && z_hi > z_lo && max_dims[0] > 0.0 && max_dims[1] > 0.0 &&
                  max_dims[2] > 0.0 && max_points > 0.0 && radius > 0.0 && class_count > 0;
  if (!ok) throw std::invalid_argument("normalization bounds must be strictly positive");
}

ChannelSet NormConfig::effective_channels() const {
  return use_elongation ? stat_channels : stat_channels.without(StatChannel::kElongation);
}

std::size_t NormConfig::instance_dim() const {
  return slot::kStatsBegin + 4 * effective_channels().size() + class_count;
}

std::size_t NormConfig::neighbor_geometry_dim() const { return 6 + class_count; }

std::uint64_t NormConfig::digest() const {
  Fnv1a h;
  h.add(max_range);
  h.add(z_lo);
  h.add(z_hi);
  for (double d : max_dims) h.add(d);
  h.add(max_points);
  h.add(radius);
  h.add(static_cast<std::uint64_t>(class_count));
  h.add(static_cast<std::uint64_t>(stat_channels.mask()));
  for (auto c : stat_channels.channels()) h.add(static_cast<std::uint64_t>(c));
  h.add(static_cast<std::uint64_t>(use_elongation));
  return h.value();
}

std::uint8_t FeatureGroups::bits() const {
  return static_cast<std::uint8_t>((box ? 1 : 0) | (num_points ? 2 : 0) |
                                   (viewing_angle ? 4 : 0) | (statistics ? 8 : 0) |
                                   (keep_score ? 16 : 0));
}

FeatureGroups FeatureGroups::from_bits(std::uint8_t bits) {
  return {(bits & 1) != 0, (bits & 2) != 0, (bits & 4) != 0, (bits & 8) != 0, (bits & 16) != 0};
}

std::vector<double> ablation_mask(const FeatureGroups& groups, const NormConfig& cfg) {
  std::vector<double> mask(cfg.instance_dim(), 1.0);
  const std::size_t nc = cfg.effective_channels().size();
  auto zero = [&](std::size_t i) { mask[i] = 0.0; };
  if (!groups.box) {
    for (std::size_t i = slot::kCx; i <= slot::kSinYaw; ++i) zero(i);
    zero(slot::kRange);
    if (!groups.keep_score) zero(slot::kScore);
  }
  if (!groups.viewing_angle) {
    zero(slot::kCosAlpha);
    zero(slot::kSinAlpha);
  }
  if (!groups.num_points) zero(slot::kCount);
  if (!groups.statistics) {
    for (std::size_t i = 0; i < 4 * nc; ++i) zero(slot::kStatsBegin + i);
  }
  return mask;
}

std::vector<double> instance_input(const Detection& det, std::span<const Point> in_box_points,
                                   const NormConfig& cfg) {
  const auto canonical = canonicalize(in_box_points, det.box);
  const auto stats = point_statistics(canonical, cfg.effective_channels());
  std::vector<double> out(cfg.instance_dim());
  write_instance(det, stats, in_box_points.size(), cfg, out);
  return out;
}

void instance_input(const Detection& det, std::span<const Point> cloud,
                    std::span<const std::uint32_t> indices, const NormConfig& cfg,
                    std::span<double> out) {
  if (out.size() != cfg.instance_dim()) throw std::invalid_argument("instance buffer size");
  thread_local std::vector<Point> canonical;
  canonical.clear();
  const BoxFrame frame(det.box);
  for (const std::uint32_t i : indices) {
    const Point& p = cloud[i];
    const auto c = frame.to_canonical(p.x, p.y, p.z);
    canonical.push_back({c[0], c[1], c[2], p.intensity, p.elongation});
  }
  const auto stats = point_statistics(canonical, cfg.effective_channels());
  write_instance(det, stats, indices.size(), cfg, out);
}

std::vector<std::uint32_t> radius_neighbors(std::span<const Detection> dets, std::size_t subject,
                                            double radius) {
  if (subject >= dets.size()) throw std::out_of_range("subject index");
  std::vector<BoundingBox3D> boxes;
  boxes.reserve(dets.size());
  for (const auto& d : dets) boxes.push_back(d.box);
  return NeighborIndex(boxes, radius).query(subject);
}

void neighbor_geometry(const Detection& subject, const Detection& neighbor, const NormConfig& cfg,
                       std::span<double> out) {
  if (out.size() != cfg.neighbor_geometry_dim()) throw std::invalid_argument("geometry buffer");
  check_class(neighbor.class_id, cfg);
  const double dx = subject.box.cx - neighbor.box.cx;
  const double dy = subject.box.cy - neighbor.box.cy;
  const double dz = subject.box.cz - neighbor.box.cz;
  const double inv_r = 1.0 / cfg.radius;
  std::fill(out.begin(), out.end(), 0.0);
  out[0] = std::sqrt(dx * dx + dy * dy + dz * dz) * inv_r;
  out[1] = dx * inv_r;
  out[2] = dy * inv_r;
  out[3] = dz * inv_r;
  const auto rel = angle_encode(wrap_angle(subject.box.yaw - neighbor.box.yaw));
  out[4] = rel[0];
  out[5] = rel[1];
  out[6 + neighbor.class_id] = 1.0;
  for (double& v : out) v = clamp_unit(v);
}

std::vector<double> neighbor_input(const Detection& subject, const Detection& neighbor,
                                   std::span<const double> neighbor_embedding,
                                   const NormConfig& cfg) {
  std::vector<double> out(cfg.neighbor_geometry_dim() + neighbor_embedding.size());
  neighbor_geometry(subject, neighbor, cfg,
                    std::span<double>(out).first(cfg.neighbor_geometry_dim()));
  std::copy(neighbor_embedding.begin(), neighbor_embedding.end(),
            out.begin() + static_cast<std::ptrdiff_t>(cfg.neighbor_geometry_dim()));
  return out;
}

void set_neighbors(FrameInputs& inputs, std::span<const Detection> dets,
                   const std::vector<std::vector<std::uint32_t>>& neighbors, const NormConfig& cfg) {
  if (neighbors.size() != dets.size()) throw std::invalid_argument("neighbor list count");
  inputs.pair_offsets.assign(dets.size() + 1, 0);
  inputs.pair_neighbor.clear();
  for (std::size_t i = 0; i < dets.size(); ++i) {
    for (const std::uint32_t j : neighbors[i]) {
      if (j >= dets.size()) throw std::out_of_range("neighbor index");
      inputs.pair_neighbor.push_back(j);
    }
    inputs.pair_offsets[i + 1] = static_cast<std::uint32_t>(inputs.pair_neighbor.size());
  }
  const auto gdim = static_cast<Eigen::Index>(cfg.neighbor_geometry_dim());
  inputs.pair_geometry.resize(gdim, static_cast<Eigen::Index>(inputs.pair_neighbor.size()));
  for (std::size_t i = 0; i < dets.size(); ++i) {
    for (std::uint32_t p = inputs.pair_offsets[i]; p < inputs.pair_offsets[i + 1]; ++p) {
      neighbor_geometry(dets[i], dets[inputs.pair_neighbor[p]], cfg,
                        std::span<double>(inputs.pair_geometry.col(p).data(),
                                          static_cast<std::size_t>(gdim)));
    }
  }
}

FrameInputs build_frame_inputs(std::span<const Detection> dets, std::span<const Point> cloud,
                               const NormConfig& cfg, FeatureTimings* timings) {
  cfg.validate();
  FrameInputs in;
  const auto dim = static_cast<Eigen::Index>(cfg.instance_dim());
  in.instance.resize(dim, static_cast<Eigen::Index>(dets.size()));

  auto t0 = Clock::now();
  std::vector<BoundingBox3D> boxes;
  boxes.reserve(dets.size());
  for (const auto& d : dets) boxes.push_back(d.box);
  const auto members = points_in_boxes(cloud, boxes);
  if (timings) timings->points_in_box += seconds_since(t0);

  t0 = Clock::now();
  for (std::size_t i = 0; i < dets.size(); ++i) {
    instance_input(dets[i], cloud, members[i], cfg,
                   std::span<double>(in.instance.col(static_cast<Eigen::Index>(i)).data(),
                                     static_cast<std::size_t>(dim)));
  }
  if (timings) timings->instance_features += seconds_since(t0);

  t0 = Clock::now();
  std::vector<std::vector<std::uint32_t>> neighbors(dets.size());
  if (!dets.empty()) {
    const NeighborIndex nindex(boxes, cfg.radius);
    for (std::size_t i = 0; i < dets.size(); ++i) neighbors[i] = nindex.query(i);
  }
  set_neighbors(in, dets, neighbors, cfg);
  if (timings) timings->neighbor_query += seconds_since(t0);
  return in;
}

}  // namespace gace
