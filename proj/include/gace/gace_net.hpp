#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <vector>

#include "gace/features.hpp"
#include "gace/mlp.hpp"

namespace gace {

/// Layer widths of the three sub-networks.
struct ModelShape {
  std::size_t hidden = 256;
  std::size_t instance_dim = 128;  // f^I
  std::size_t context_dim = 64;    // f^C

  friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

/// Weights of the instance (H_I), context (H_C) and fusion (H_F) networks plus the input mask.
template <typename Scalar>
struct GaceParams {
  BasicMlp<Scalar> instance_net;
  BasicMlp<Scalar> context_net;  // input = [neighbor geometry, neighbor f^I]
  BasicMlp<Scalar> fusion_net;   // output = 2 logits (score, IoU)
  Vec<Scalar> input_mask;
  bool use_context = true;

  template <typename Other>
  GaceParams<Other> cast() const {
    return {instance_net.template cast<Other>(), context_net.template cast<Other>(),
            fusion_net.template cast<Other>(), input_mask.template cast<Other>(), use_context};
  }
};

struct GaceModel {
  static constexpr std::uint32_t kFormatVersion = 1;

  NormConfig norm;
  ModelShape shape;
  FeatureGroups groups;
  std::uint64_t seed = 0;
  GaceParams<double> params;

  /// Seeded fan-in uniform initialization.
  static GaceModel create(const NormConfig& norm, const ModelShape& shape,
                          const FeatureGroups& groups, bool use_context, std::uint64_t seed);

  std::size_t neighbor_geometry_dim() const { return norm.neighbor_geometry_dim(); }
  std::size_t parameter_count() const;
  /// Rounds every parameter to the nearest 32-bit float (the stored precision).
  void round_to_storage_precision();
  void validate() const;
};

struct LossConfig {
  double lambda_iou = 0.5;
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;
};

inline constexpr double kProbabilityClamp = 1e-7;

double focal_loss(double s_hat, int u, double gamma, double alpha);
/// d focal_loss / d s_hat; zero where the clamp is active.
double focal_loss_grad(double s_hat, int u, double gamma, double alpha);
double iou_l1_loss(double v_hat, double v);

struct LossParts {
  double total = 0.0;
  double focal = 0.0;
  double iou_l1 = 0.0;
};

/// Mean focal loss plus lambda times mean L1 IoU loss. Throws on an empty batch.
LossParts total_loss(std::span<const double> s_hat, std::span<const double> v_hat,
                     std::span<const std::uint8_t> u, std::span<const double> v,
                     const LossConfig& cfg);

/// Cached intermediates of one frame's forward pass.
template <typename Scalar>
struct ForwardState {
  /// False skips the per-pair caches (pair_pre, pair_hidden, pair_out), which only backprop
  /// needs, and runs the context net in cache-sized blocks of pairs.
  bool keep_pair_cache = true;
  Mat<Scalar> masked_input;
  MlpCache<Scalar> instance_cache;
  Mat<Scalar> f_instance;          // instance_dim x N
  Mat<Scalar> embedding_proj;      // hidden x N, context layer-1 weights applied to f^I, plus bias
  Mat<Scalar> pair_pre;            // hidden x P
  Mat<Scalar> pair_hidden;         // hidden x P
  Mat<Scalar> pair_out;            // context_dim x P
  Mat<Scalar> f_context;           // context_dim x N
  Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic> argmax;  // pair index or -1
  Mat<Scalar> fused;               // (instance_dim + context_dim) x N
  MlpCache<Scalar> fusion_cache;
  Mat<Scalar> logits;              // 2 x N
  Vec<Scalar> s_hat;
  Vec<Scalar> v_hat;
};

/// Wall time per network stage, in seconds.
struct NetTimings {
  double instance = 0.0;
  double context = 0.0;
  double fusion = 0.0;
};

template <typename Scalar>
void gace_forward(const GaceParams<Scalar>& params, const FrameInputs& inputs,
                  ForwardState<Scalar>& state, NetTimings* timings = nullptr);

extern template void gace_forward<double>(const GaceParams<double>&, const FrameInputs&,
                                          ForwardState<double>&, NetTimings*);
extern template void gace_forward<float>(const GaceParams<float>&, const FrameInputs&,
                                         ForwardState<float>&, NetTimings*);

struct GaceGradients {
  MlpParams instance_net;
  MlpParams context_net;
  MlpParams fusion_net;
  Eigen::MatrixXd d_instance_input;  // gradient w.r.t. the unmasked instance inputs

  static GaceGradients zeros_like(const GaceParams<double>& params);
  void set_zero();
  void add(const GaceGradients& other);
};

struct BackwardOptions {
  bool detach_neighbor_embeddings = false;
  bool want_input_gradient = false;
};

/// Adds d(loss)/d(params) for one frame. The per-frame loss contribution is the sum over its
/// detections divided by `normalizer` (the batch detection count). Returns the un-normalized
/// sums of the focal and L1 terms.
LossParts accumulate_gradients(const GaceParams<double>& params, const FrameInputs& inputs,
                               const ForwardState<double>& state,
                               std::span<const std::uint8_t> u, std::span<const double> v,
                               const LossConfig& cfg, double normalizer,
                               const BackwardOptions& options, GaceGradients& grads);

/// Raw parameter storage for optimizer updates, in a fixed order.
std::vector<std::span<double>> parameter_blocks(GaceParams<double>& params);
std::vector<std::span<double>> parameter_blocks(GaceGradients& grads);

}  // namespace gace
