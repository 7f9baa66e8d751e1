#pragma once

// Independent reference implementations shared by the unit tests and the acceptance suite.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gace/eval.hpp"
#include "gace/gace_net.hpp"
#include "gace/geometry.hpp"
#include "test_util.hpp"

namespace gace::testing {

// ---------------------------------------------------------------------------------------------
// geometry

/// BEV membership computed independently: rotate into the box frame, compare half extents.
inline bool inside_footprint(const BoundingBox3D& b, double x, double y) {
  const double tx = x - b.cx, ty = y - b.cy;
  const double lx = std::cos(b.yaw) * tx + std::sin(b.yaw) * ty;
  const double ly = -std::sin(b.yaw) * tx + std::cos(b.yaw) * ty;
  return std::abs(lx) <= b.dx / 2 && std::abs(ly) <= b.dy / 2;
}

/// Rejection-sampling estimate of the footprint overlap over the union's bounding rectangle.
inline double monte_carlo_overlap(const BoundingBox3D& a, const BoundingBox3D& b,
                                  std::size_t samples, std::mt19937_64& rng) {
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto* box : {&a, &b}) {
    for (const auto& c : box->bev_corners()) {
      xmin = std::min(xmin, c[0]);
      xmax = std::max(xmax, c[0]);
      ymin = std::min(ymin, c[1]);
      ymax = std::max(ymax, c[1]);
    }
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < samples; ++i) {
    const double x = uniform(rng, xmin, xmax), y = uniform(rng, ymin, ymax);
    if (inside_footprint(a, x, y) && inside_footprint(b, x, y)) ++hits;
  }
  return (xmax - xmin) * (ymax - ymin) * static_cast<double>(hits) / static_cast<double>(samples);
}

/// Overlap of a unit square with itself rotated by 45 degrees.
inline const double kOctagonArea = 2.0 * (std::sqrt(2.0) - 1.0);

// ---------------------------------------------------------------------------------------------
// metrics

/// Precision of each rank from a TP/FP list already in rank order.
inline std::vector<double> precisions(const std::vector<bool>& tp_in_order) {
  std::vector<double> p;
  std::size_t tp = 0;
  for (std::size_t k = 0; k < tp_in_order.size(); ++k) {
    tp += tp_in_order[k];
    p.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
  }
  return p;
}

/// Continuous AP: each TP adds 1/num_gt times the best precision at its rank or later.
inline double reference_ap(const std::vector<bool>& tp_in_order, std::size_t num_gt) {
  if (num_gt == 0) return 0.0;
  const auto p = precisions(tp_in_order);
  double ap = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (!tp_in_order[k]) continue;
    ap += *std::max_element(p.begin() + static_cast<std::ptrdiff_t>(k), p.end());
  }
  return ap / static_cast<double>(num_gt);
}

/// 40-point AP: mean over r = j/40 of the best precision among ranks with recall >= r.
inline double reference_r40(const std::vector<bool>& tp_in_order, std::size_t num_gt) {
  if (num_gt == 0) return 0.0;
  const auto p = precisions(tp_in_order);
  double sum = 0.0;
  for (int j = 1; j <= 40; ++j) {
    const double r = j / 40.0;
    double best = 0.0;
    std::size_t tp = 0;
    for (std::size_t k = 0; k < p.size(); ++k) {
      tp += tp_in_order[k];
      if (static_cast<double>(tp) / static_cast<double>(num_gt) >= r) best = std::max(best, p[k]);
    }
    sum += best;
  }
  return sum / 40.0;
}

/// Rank order computed independently: count how many detections beat each one.
inline std::vector<std::pair<std::size_t, std::size_t>> reference_rank(
    std::span<const EvalFrame> frames, std::uint32_t cls) {
  std::vector<std::pair<std::size_t, std::size_t>> all;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    for (std::size_t i = 0; i < frames[f].detections.size(); ++i) {
      if (frames[f].detections[i].class_id == cls) all.emplace_back(f, i);
    }
  }
  auto beats = [&](const std::pair<std::size_t, std::size_t>& a,
                   const std::pair<std::size_t, std::size_t>& b) {
    const double sa = frames[a.first].detections[a.second].score;
    const double sb = frames[b.first].detections[b.second].score;
    if (sa != sb) return sa > sb;
    if (frames[a.first].frame_id != frames[b.first].frame_id) {
      return frames[a.first].frame_id < frames[b.first].frame_id;
    }
    return a.first != b.first ? a.first < b.first : a.second < b.second;
  };
  std::vector<std::pair<std::size_t, std::size_t>> out(all.size());
  for (const auto& d : all) {
    std::size_t pos = 0;
    for (const auto& e : all) pos += beats(e, d);
    out[pos] = d;
  }
  return out;
}

/// Exhaustive greedy matcher: for each ranked detection, scan every gt of its frame.
inline std::vector<bool> reference_match(std::span<const EvalFrame> frames, std::uint32_t cls,
                                         double thr) {
  std::vector<std::vector<bool>> taken(frames.size());
  for (std::size_t f = 0; f < frames.size(); ++f) {
    taken[f].assign(frames[f].ground_truth.size(), false);
  }
  std::vector<bool> tps;
  for (const auto& [f, i] : reference_rank(frames, cls)) {
    const auto& det = frames[f].detections[i];
    std::size_t best = frames[f].ground_truth.size();
    double best_iou = thr;
    for (std::size_t g = 0; g < frames[f].ground_truth.size(); ++g) {
      const auto& gt = frames[f].ground_truth[g];
      if (gt.class_id != cls || taken[f][g]) continue;
      const double iou = iou3d(det.box, gt.box);
      if (iou >= best_iou && (best == frames[f].ground_truth.size() || iou > best_iou)) {
        best = g;
        best_iou = iou;
      }
    }
    if (best < frames[f].ground_truth.size()) taken[f][best] = true;
    tps.push_back(best < frames[f].ground_truth.size());
  }
  return tps;
}

/// Small two-class instance with duplicate frame ids and quantized (tied) scores.
inline std::vector<EvalFrame> random_instance(std::mt19937_64& rng, std::size_t max_frames) {
  std::vector<EvalFrame> frames(uniform_int(rng, 1, max_frames));
  for (auto& fr : frames) {
    fr.frame_id = "frame" + std::to_string(uniform_int(rng, 0, 2));
    const std::size_t ng = uniform_int(rng, 0, 6);
    for (std::size_t g = 0; g < ng; ++g) {
      fr.ground_truth.push_back({random_box(rng, 2.0),
                                 static_cast<std::uint32_t>(uniform_int(rng, 0, 1))});
    }
    fr.gt_ignored.assign(ng, 0);
    const std::size_t nd = uniform_int(rng, 0, 6);
    for (std::size_t i = 0; i < nd; ++i) {
      Detection d = random_detection(rng, 2, 2.0);
      if (ng > 0 && uniform(rng, 0, 1) < 0.7) {
        const auto& g = fr.ground_truth[uniform_int(rng, 0, ng - 1)];
        d.box = BoundingBox3D(g.box.cx + uniform(rng, -0.3, 0.3), g.box.cy + uniform(rng, -0.3, 0.3),
                              g.box.cz, g.box.dx, g.box.dy, g.box.dz, g.box.yaw + uniform(rng, -3, 3));
        d.class_id = g.class_id;
      }
      d.score = std::round(d.score * 5) / 5;
      fr.detections.push_back(d);
    }
  }
  return frames;
}

/// Checks pr_curve and both AP modes against the references on one class.
/// Returns false on the first disagreement.
inline bool metrics_match_reference(std::span<const EvalFrame> frames, std::uint32_t cls,
                                    double thr) {
  const auto expected = reference_match(frames, cls, thr);
  const auto curve = pr_curve(frames, cls, thr);
  if (curve.points.size() != expected.size()) return false;
  std::size_t tp = 0, num_gt = 0;
  for (const auto& f : frames) {
    for (const auto& g : f.ground_truth) num_gt += g.class_id == cls;
  }
  if (curve.num_gt != num_gt) return false;
  for (std::size_t k = 0; k < expected.size(); ++k) {
    tp += expected[k];
    if (curve.points[k].tp != tp) return false;
  }
  // Summation order differs from the references, so equality is up to rounding.
  const double ap = average_precision(curve, ApMode::kContinuous);
  const double r40 = average_precision(curve, ApMode::kR40);
  return std::abs(ap - reference_ap(expected, num_gt)) <= 1e-12 &&
         std::abs(r40 - reference_r40(expected, num_gt)) <= 1e-12;
}

// ---------------------------------------------------------------------------------------------
// gradients

/// Detections and a cloud of points around them; neighbors use the default radius query.
struct TinyFrame {
  std::vector<Detection> dets;
  std::vector<Point> cloud;
  FrameInputs inputs;
  std::vector<std::uint8_t> u;
  std::vector<double> v;
};

inline TinyFrame make_tiny_frame(std::mt19937_64& rng, std::size_t n, const NormConfig& cfg,
                                 double span) {
  TinyFrame f;
  for (std::size_t i = 0; i < n; ++i) {
    f.dets.push_back(random_detection(rng, cfg.class_count, span));
    const auto& b = f.dets.back().box;
    for (int k = 0; k < 30; ++k) {
      f.cloud.push_back({b.cx + uniform(rng, -b.dx, b.dx) / 2, b.cy + uniform(rng, -b.dy, b.dy) / 2,
                         b.cz + uniform(rng, -b.dz, b.dz) / 2, uniform(rng, 0, 1),
                         uniform(rng, 0, 1)});
    }
    f.u.push_back(static_cast<std::uint8_t>(uniform_int(rng, 0, 1)));
    f.v.push_back(uniform(rng, 0, 1));
  }
  f.inputs = build_frame_inputs(f.dets, f.cloud, cfg);
  return f;
}

/// Mean per-detection loss from a finished forward pass.
inline double tiny_frame_loss(const ForwardState<double>& st, const TinyFrame& f,
                              const LossConfig& lc) {
  double sum = 0.0;
  for (std::size_t i = 0; i < f.dets.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    sum += focal_loss(st.s_hat(k), f.u[i], lc.focal_gamma, lc.focal_alpha) +
           lc.lambda_iou * iou_l1_loss(st.v_hat(k), f.v[i]);
  }
  return sum / static_cast<double>(f.dets.size());
}

inline double tiny_frame_loss(const GaceParams<double>& params, const TinyFrame& f,
                              const LossConfig& lc) {
  ForwardState<double> st;
  gace_forward(params, f.inputs, st);
  return tiny_frame_loss(st, f, lc);
}

/// Every discrete choice the loss depends on: rectifier on/off for each hidden unit, max-pool
/// routing and the side of the L1 kink. The loss is smooth wherever this stays constant.
inline std::vector<std::int32_t> routing_signature(const ForwardState<double>& st,
                                                   const TinyFrame& f) {
  std::vector<std::int32_t> sig;
  auto add_signs = [&](const Eigen::MatrixXd& m) {
    for (Eigen::Index k = 0; k < m.size(); ++k) sig.push_back(m.data()[k] > 0.0);
  };
  for (const auto* cache : {&st.instance_cache, &st.fusion_cache}) {
    for (std::size_t l = 0; l + 1 < cache->pre.size(); ++l) add_signs(cache->pre[l]);
  }
  add_signs(st.pair_pre);
  sig.insert(sig.end(), st.argmax.data(), st.argmax.data() + st.argmax.size());
  for (std::size_t i = 0; i < f.dets.size(); ++i) {
    sig.push_back(st.v_hat(static_cast<Eigen::Index>(i)) > f.v[i]);
  }
  return sig;
}

/// Ratio of disagreement to magnitude, floored so vanishing gradients do not divide by 0.
inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

struct GradientCheck {
  std::size_t checked = 0;
  std::size_t kinks = 0;  // stencils whose routing signature changes between the two sides
  double worst = 0.0;
};

/// Compares every analytic parameter gradient with a central difference of step h. Stencils
/// that straddle a rectifier, max-pool or L1 kink are counted and skipped: there the central
/// difference estimates neither one-sided derivative.
inline void check_gradients(GaceModel& model, const TinyFrame& f, const LossConfig& lc, double h,
                            GradientCheck& out) {
  ForwardState<double> st;
  gace_forward(model.params, f.inputs, st);
  auto grads = GaceGradients::zeros_like(model.params);
  accumulate_gradients(model.params, f.inputs, st, f.u, f.v, lc,
                       static_cast<double>(f.dets.size()), {}, grads);
  auto p_blocks = parameter_blocks(model.params);
  auto g_blocks = parameter_blocks(grads);
  const auto base_sig = routing_signature(st, f);
  ForwardState<double> up_st, down_st;
  for (std::size_t b = 0; b < p_blocks.size(); ++b) {
    for (std::size_t k = 0; k < p_blocks[b].size(); ++k) {
      double& w = p_blocks[b][k];
      const double saved = w;
      w = saved + h;
      gace_forward(model.params, f.inputs, up_st);
      w = saved - h;
      gace_forward(model.params, f.inputs, down_st);
      w = saved;
      if (routing_signature(up_st, f) != base_sig || routing_signature(down_st, f) != base_sig) {
        ++out.kinks;
        continue;
      }
      const double numeric = (tiny_frame_loss(up_st, f, lc) - tiny_frame_loss(down_st, f, lc)) / (2 * h);
      out.worst = std::max(out.worst, relative_error(g_blocks[b][k], numeric));
      ++out.checked;
    }
  }
}

}  // namespace gace::testing
