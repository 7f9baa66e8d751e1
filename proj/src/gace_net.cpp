#include "gace/gace_net.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace gace {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

template <typename Derived>
void activation_backward(Eigen::MatrixBase<Derived>& d, Activation a, const Eigen::MatrixXd& pre,
                         const Eigen::MatrixXd& post) {
  switch (a) {
    case Activation::kIdentity: break;
    case Activation::kRelu: d = (pre.array() > 0.0).select(d, 0.0); break;
    case Activation::kLogistic:
      d = (d.array() * post.array() * (1.0 - post.array())).matrix();
      break;
  }
}

void check_context_net(const MlpParams& ctx) {
  if (ctx.layers.size() != 2) throw std::invalid_argument("context network must have two layers");
}

}  // namespace

GaceModel GaceModel::create(const NormConfig& norm, const ModelShape& shape,
                            const FeatureGroups& groups, bool use_context, std::uint64_t seed) {
  norm.validate();
  if (shape.hidden == 0 || shape.instance_dim == 0 || shape.context_dim == 0) {
    throw std::invalid_argument("model dimensions must be positive");
  }
  GaceModel m;
  m.norm = norm;
  m.shape = shape;
  m.groups = groups;
  m.seed = seed;
  const std::size_t inst[] = {norm.instance_dim(), shape.hidden, shape.instance_dim};
  const std::size_t ctx[] = {norm.neighbor_geometry_dim() + shape.instance_dim, shape.hidden,
                             shape.context_dim};
  const std::size_t fus[] = {shape.instance_dim + shape.context_dim, shape.hidden, 2};
  m.params.instance_net = MlpParams::zeros(inst, Activation::kRelu, Activation::kIdentity);
  m.params.context_net = MlpParams::zeros(ctx, Activation::kRelu, Activation::kIdentity);
  m.params.fusion_net = MlpParams::zeros(fus, Activation::kRelu, Activation::kLogistic);
  std::mt19937_64 rng(seed);
  init_fan_in_uniform(m.params.instance_net, rng);
  init_fan_in_uniform(m.params.context_net, rng);
  init_fan_in_uniform(m.params.fusion_net, rng);
  const auto mask = ablation_mask(groups, norm);
  m.params.input_mask = Eigen::Map<const Eigen::VectorXd>(mask.data(),
                                                          static_cast<Eigen::Index>(mask.size()));
  m.params.use_context = use_context;
  return m;
}

std::size_t GaceModel::parameter_count() const {
  return params.instance_net.parameter_count() + params.context_net.parameter_count() +
         params.fusion_net.parameter_count();
}

void GaceModel::round_to_storage_precision() {
  for (auto block : parameter_blocks(params)) {
    for (double& x : block) x = static_cast<double>(static_cast<float>(x));
  }
}

void GaceModel::validate() const {
  norm.validate();
  params.instance_net.validate();
  params.context_net.validate();
  params.fusion_net.validate();
  check_context_net(params.context_net);
  const bool ok =
      params.instance_net.input_dim() == norm.instance_dim() &&
      params.instance_net.output_dim() == shape.instance_dim &&
      params.context_net.input_dim() == norm.neighbor_geometry_dim() + shape.instance_dim &&
      params.context_net.output_dim() == shape.context_dim &&
      params.fusion_net.input_dim() == shape.instance_dim + shape.context_dim &&
      params.fusion_net.output_dim() == 2 &&
      static_cast<std::size_t>(params.input_mask.size()) == norm.instance_dim();
  if (!ok) throw std::invalid_argument("model dimensions are inconsistent");
}

double focal_loss(double s_hat, int u, double gamma, double alpha) {
  const double p = std::clamp(s_hat, kProbabilityClamp, 1.0 - kProbabilityClamp);
  const double pt = u ? p : 1.0 - p;
  const double at = u ? alpha : 1.0 - alpha;
  return -at * std::pow(1.0 - pt, gamma) * std::log(pt);
}

double focal_loss_grad(double s_hat, int u, double gamma, double alpha) {
  if (s_hat < kProbabilityClamp || s_hat > 1.0 - kProbabilityClamp) return 0.0;
  const double pt = u ? s_hat : 1.0 - s_hat;
  const double at = u ? alpha : 1.0 - alpha;
  const double q = 1.0 - pt;
  const double mod_grad = gamma == 0.0 ? 0.0 : gamma * std::pow(q, gamma - 1.0);
  const double d_pt = at * mod_grad * std::log(pt) - at * std::pow(q, gamma) / pt;
  return u ? d_pt : -d_pt;
}

double iou_l1_loss(double v_hat, double v) { return std::abs(v_hat - v); }

LossParts total_loss(std::span<const double> s_hat, std::span<const double> v_hat,
                     std::span<const std::uint8_t> u, std::span<const double> v,
                     const LossConfig& cfg) {
  if (s_hat.empty()) throw std::invalid_argument("total_loss on an empty batch");
  if (v_hat.size() != s_hat.size() || u.size() != s_hat.size() || v.size() != s_hat.size()) {
    throw std::invalid_argument("total_loss inputs are not aligned");
  }
  LossParts parts;
  for (std::size_t i = 0; i < s_hat.size(); ++i) {
    parts.focal += focal_loss(s_hat[i], u[i], cfg.focal_gamma, cfg.focal_alpha);
    parts.iou_l1 += iou_l1_loss(v_hat[i], v[i]);
  }
  const double n = static_cast<double>(s_hat.size());
  parts.focal /= n;
  parts.iou_l1 /= n;
  parts.total = parts.focal + cfg.lambda_iou * parts.iou_l1;
  return parts;
}

template <typename Scalar>
void gace_forward(const GaceParams<Scalar>& params, const FrameInputs& inputs,
                  ForwardState<Scalar>& st, NetTimings* timings) {
  const auto n = static_cast<Eigen::Index>(inputs.detection_count());
  const auto p_count = static_cast<Eigen::Index>(inputs.pair_count());
  if (static_cast<std::size_t>(inputs.instance.rows()) != params.instance_net.input_dim() ||
      inputs.instance.rows() != params.input_mask.size()) {
    throw std::invalid_argument("instance input dimension does not match the model");
  }
  if (inputs.pair_offsets.size() != static_cast<std::size_t>(n) + 1) {
    throw std::invalid_argument("neighbor offsets do not match detection count");
  }

  auto t0 = Clock::now();
  st.masked_input = params.input_mask.asDiagonal() * inputs.instance.template cast<Scalar>();
  st.f_instance = mlp_forward_batch(params.instance_net, st.masked_input, &st.instance_cache);
  if (timings) timings->instance += seconds_since(t0);

  t0 = Clock::now();
  const auto& l1 = params.context_net.layers.at(0);
  const auto& l2 = params.context_net.layers.at(1);
  const Eigen::Index gdim = inputs.pair_geometry.rows();
  const Eigen::Index edim = st.f_instance.rows();
  const Eigen::Index cdim = static_cast<Eigen::Index>(l2.out_dim());
  if (static_cast<std::size_t>(gdim + edim) != l1.in_dim() && p_count > 0) {
    throw std::invalid_argument("neighbor input dimension does not match the model");
  }
  st.f_context = Mat<Scalar>::Zero(cdim, n);
  st.argmax.setConstant(cdim, n, -1);
  if (params.use_context && p_count > 0) {
    // The neighbor embedding term is shared by every pair naming that neighbor; the bias rides along.
    st.embedding_proj.noalias() = l1.weight.rightCols(edim) * st.f_instance;
    st.embedding_proj.colwise() += l1.bias;
    const auto geometry = inputs.pair_geometry.template cast<Scalar>();
    // Columns [lo, hi) cover whole subjects [first, last); results land in pre/hidden/out.
    const auto run_block = [&](Eigen::Index first, Eigen::Index last, Mat<Scalar>& pre,
                               Mat<Scalar>& hidden, Mat<Scalar>& out) {
      const auto lo = static_cast<Eigen::Index>(inputs.pair_offsets[static_cast<std::size_t>(first)]);
      const auto hi = static_cast<Eigen::Index>(inputs.pair_offsets[static_cast<std::size_t>(last)]);
      pre.noalias() = l1.weight.leftCols(gdim) * geometry.middleCols(lo, hi - lo);
      for (Eigen::Index p = lo; p < hi; ++p) {
        pre.col(p - lo) += st.embedding_proj.col(inputs.pair_neighbor[static_cast<std::size_t>(p)]);
      }
      hidden = pre;
      apply_activation(hidden, l1.activation);
      out.noalias() = l2.weight * hidden;
      out.colwise() += l2.bias;
      apply_activation(out, l2.activation);
      for (Eigen::Index i = first; i < last; ++i) {
        const auto begin = static_cast<Eigen::Index>(inputs.pair_offsets[static_cast<std::size_t>(i)]);
        const auto end = static_cast<Eigen::Index>(inputs.pair_offsets[static_cast<std::size_t>(i) + 1]);
        if (begin == end) continue;
        // Strict comparison keeps the lowest pair index on ties.
        Scalar* best_v = st.f_context.col(i).data();
        std::int32_t* best = st.argmax.col(i).data();
        const Scalar* head = out.col(begin - lo).data();
        for (Eigen::Index c = 0; c < cdim; ++c) {
          best_v[c] = head[c];
          best[c] = static_cast<std::int32_t>(begin);
        }
        for (Eigen::Index p = begin + 1; p < end; ++p) {
          const Scalar* col = out.col(p - lo).data();
          for (Eigen::Index c = 0; c < cdim; ++c) {
            if (col[c] > best_v[c]) {
              best_v[c] = col[c];
              best[c] = static_cast<std::int32_t>(p);
            }
          }
        }
      }
    };
    if (st.keep_pair_cache) {
      run_block(0, n, st.pair_pre, st.pair_hidden, st.pair_out);
    } else {
      constexpr Eigen::Index kBlockPairs = 256;
      Mat<Scalar> pre, hidden, out;
      Eigen::Index first = 0;
      while (first < n) {
        Eigen::Index last = first + 1;
        const auto lo = inputs.pair_offsets[static_cast<std::size_t>(first)];
        while (last < n && inputs.pair_offsets[static_cast<std::size_t>(last) + 1] - lo <=
                               static_cast<std::uint32_t>(kBlockPairs)) {
          ++last;
        }
        run_block(first, last, pre, hidden, out);
        first = last;
      }
      st.pair_pre.resize(0, 0);
      st.pair_hidden.resize(0, 0);
      st.pair_out.resize(0, 0);
    }
  }
  if (timings) timings->context += seconds_since(t0);

  t0 = Clock::now();
  st.fused.resize(edim + cdim, n);
  st.fused.topRows(edim) = st.f_instance;
  st.fused.bottomRows(cdim) = st.f_context;
  const Mat<Scalar> out = mlp_forward_batch(params.fusion_net, st.fused, &st.fusion_cache);
  st.s_hat = out.row(0).transpose();
  st.v_hat = out.row(1).transpose();
  if (timings) timings->fusion += seconds_since(t0);
}

template void gace_forward<double>(const GaceParams<double>&, const FrameInputs&,
                                   ForwardState<double>&, NetTimings*);
template void gace_forward<float>(const GaceParams<float>&, const FrameInputs&,
                                  ForwardState<float>&, NetTimings*);

GaceGradients GaceGradients::zeros_like(const GaceParams<double>& params) {
  GaceGradients g;
  g.instance_net = params.instance_net;
  g.context_net = params.context_net;
  g.fusion_net = params.fusion_net;
  g.set_zero();
  return g;
}

void GaceGradients::set_zero() {
  instance_net.set_zero();
  context_net.set_zero();
  fusion_net.set_zero();
  d_instance_input.resize(0, 0);
}

void GaceGradients::add(const GaceGradients& other) {
  auto add_mlp = [](MlpParams& dst, const MlpParams& src) {
    for (std::size_t k = 0; k < dst.layers.size(); ++k) {
      dst.layers[k].weight += src.layers[k].weight;
      dst.layers[k].bias += src.layers[k].bias;
    }
  };
  add_mlp(instance_net, other.instance_net);
  add_mlp(context_net, other.context_net);
  add_mlp(fusion_net, other.fusion_net);
}

LossParts accumulate_gradients(const GaceParams<double>& params, const FrameInputs& inputs,
                               const ForwardState<double>& st, std::span<const std::uint8_t> u,
                               std::span<const double> v, const LossConfig& cfg,
                               double normalizer, const BackwardOptions& options,
                               GaceGradients& grads) {
  const auto n = static_cast<Eigen::Index>(inputs.detection_count());
  if (u.size() != static_cast<std::size_t>(n) || v.size() != static_cast<std::size_t>(n)) {
    throw std::invalid_argument("labels are not aligned with detections");
  }
  LossParts sums;
  Eigen::MatrixXd d_out(2, n);
  const double scale = 1.0 / normalizer;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const double s = st.s_hat(i), vh = st.v_hat(i);
    sums.focal += focal_loss(s, u[k], cfg.focal_gamma, cfg.focal_alpha);
    sums.iou_l1 += iou_l1_loss(vh, v[k]);
    d_out(0, i) = scale * focal_loss_grad(s, u[k], cfg.focal_gamma, cfg.focal_alpha);
    const double sign = vh > v[k] ? 1.0 : (vh < v[k] ? -1.0 : 0.0);
    d_out(1, i) = scale * cfg.lambda_iou * sign;
  }
  sums.total = sums.focal + cfg.lambda_iou * sums.iou_l1;
  if (n == 0) return sums;

  const Eigen::MatrixXd d_fused =
      mlp_backward_batch(params.fusion_net, st.fusion_cache, st.fused, d_out, grads.fusion_net);
  const Eigen::Index edim = st.f_instance.rows();
  const Eigen::Index cdim = st.f_context.rows();
  Eigen::MatrixXd d_instance = d_fused.topRows(edim);

  const auto p_count = static_cast<Eigen::Index>(inputs.pair_count());
  if (params.use_context && p_count > 0) {
    const auto& l1 = params.context_net.layers[0];
    const auto& l2 = params.context_net.layers[1];
    auto& g1 = grads.context_net.layers[0];
    auto& g2 = grads.context_net.layers[1];
    const Eigen::Index gdim = inputs.pair_geometry.rows();

    Eigen::MatrixXd d_pair = Eigen::MatrixXd::Zero(cdim, p_count);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index c = 0; c < cdim; ++c) {
        const std::int32_t a = st.argmax(c, i);
        if (a >= 0) d_pair(c, a) += d_fused(edim + c, i);
      }
    }
    activation_backward(d_pair, l2.activation, st.pair_out, st.pair_out);
    g2.weight.noalias() += d_pair * st.pair_hidden.transpose();
    g2.bias += d_pair.rowwise().sum();
    Eigen::MatrixXd d_pre = l2.weight.transpose() * d_pair;
    activation_backward(d_pre, l1.activation, st.pair_pre, st.pair_hidden);
    g1.weight.leftCols(gdim).noalias() += d_pre * inputs.pair_geometry.transpose();
    g1.bias += d_pre.rowwise().sum();
    Eigen::MatrixXd d_proj = Eigen::MatrixXd::Zero(d_pre.rows(), n);
    for (Eigen::Index p = 0; p < p_count; ++p) {
      d_proj.col(inputs.pair_neighbor[static_cast<std::size_t>(p)]) += d_pre.col(p);
    }
    g1.weight.rightCols(edim).noalias() += d_proj * st.f_instance.transpose();
    if (!options.detach_neighbor_embeddings) {
      d_instance.noalias() += l1.weight.rightCols(edim).transpose() * d_proj;
    }
  }

  const Eigen::MatrixXd d_masked = mlp_backward_batch(params.instance_net, st.instance_cache,
                                                      st.masked_input, d_instance,
                                                      grads.instance_net);
  if (options.want_input_gradient) {
    grads.d_instance_input = params.input_mask.asDiagonal() * d_masked;
  }
  return sums;
}

namespace {

void append_blocks(MlpParams& mlp, std::vector<std::span<double>>& out) {
  for (auto& l : mlp.layers) {
    out.emplace_back(l.weight.data(), static_cast<std::size_t>(l.weight.size()));
    out.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
  }
}

}  // namespace

std::vector<std::span<double>> parameter_blocks(GaceParams<double>& params) {
  std::vector<std::span<double>> out;
  append_blocks(params.instance_net, out);
  append_blocks(params.context_net, out);
  append_blocks(params.fusion_net, out);
  return out;
}

std::vector<std::span<double>> parameter_blocks(GaceGradients& grads) {
  std::vector<std::span<double>> out;
  append_blocks(grads.instance_net, out);
  append_blocks(grads.context_net, out);
  append_blocks(grads.fusion_net, out);
  return out;
}

}  // namespace gace
