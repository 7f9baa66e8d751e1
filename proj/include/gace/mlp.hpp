#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace gace {

enum class Activation : std::uint8_t { kIdentity = 0, kRelu = 1, kLogistic = 2 };

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
struct DenseLayer {
  Mat<Scalar> weight;  // out x in
  Vec<Scalar> bias;    // out
  Activation activation = Activation::kIdentity;

  std::size_t in_dim() const { return static_cast<std::size_t>(weight.cols()); }
  std::size_t out_dim() const { return static_cast<std::size_t>(weight.rows()); }
};

/// Fully connected stack; every layer is affine followed by its activation.
template <typename Scalar>
struct BasicMlp {
  std::vector<DenseLayer<Scalar>> layers;

  /// Zero-initialized stack with `dims` = {in, hidden..., out}.
  static BasicMlp zeros(std::span<const std::size_t> dims, Activation hidden, Activation output) {
    if (dims.size() < 2) throw std::invalid_argument("mlp needs at least input and output dims");
    BasicMlp m;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
      DenseLayer<Scalar> l;
      l.weight = Mat<Scalar>::Zero(static_cast<Eigen::Index>(dims[i + 1]),
                                   static_cast<Eigen::Index>(dims[i]));
      l.bias = Vec<Scalar>::Zero(static_cast<Eigen::Index>(dims[i + 1]));
      l.activation = (i + 2 == dims.size()) ? output : hidden;
      m.layers.push_back(std::move(l));
    }
    return m;
  }

  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }
  std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
  }

  /// Throws std::invalid_argument if consecutive layer shapes do not chain.
  void validate() const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (layers[i].bias.size() != layers[i].weight.rows()) {
        throw std::invalid_argument("mlp layer bias size mismatch");
      }
      if (i > 0 && layers[i].in_dim() != layers[i - 1].out_dim()) {
        throw std::invalid_argument("mlp layer shapes do not chain");
      }
    }
  }

  template <typename Other>
  BasicMlp<Other> cast() const {
    BasicMlp<Other> m;
    for (const auto& l : layers) {
      m.layers.push_back({l.weight.template cast<Other>(), l.bias.template cast<Other>(),
                          l.activation});
    }
    return m;
  }

  void set_zero() {
    for (auto& l : layers) {
      l.weight.setZero();
      l.bias.setZero();
    }
  }
};

using MlpParams = BasicMlp<double>;

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
void init_fan_in_uniform(MlpParams& mlp, std::mt19937_64& rng);

template <typename Derived>
void apply_activation(Eigen::MatrixBase<Derived>& x, Activation a) {
  using S = typename Derived::Scalar;
  switch (a) {
    case Activation::kIdentity: break;
    case Activation::kRelu: x = x.cwiseMax(S(0)); break;
    case Activation::kLogistic:
      x = (S(1) / (S(1) + (-x.array()).exp())).matrix();
      break;
  }
}

/// Pre- and post-activation values per layer, columns are samples.
template <typename Scalar>
struct MlpCache {
  std::vector<Mat<Scalar>> pre;
  std::vector<Mat<Scalar>> post;
};

/// Batch forward; columns of `x` are samples.
template <typename Scalar>
Mat<Scalar> mlp_forward_batch(const BasicMlp<Scalar>& mlp, const Mat<Scalar>& x,
                              MlpCache<Scalar>* cache = nullptr) {
  if (static_cast<std::size_t>(x.rows()) != mlp.input_dim()) {
    throw std::invalid_argument("mlp input dimension mismatch");
  }
  if (cache) {
    cache->pre.resize(mlp.layers.size());
    cache->post.resize(mlp.layers.size());
  }
  Mat<Scalar> h = x;
  for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
    const auto& l = mlp.layers[i];
    Mat<Scalar> a = l.weight * h;
    a.colwise() += l.bias;
    if (cache) cache->pre[i] = a;
    apply_activation(a, l.activation);
    if (cache) cache->post[i] = a;
    h = std::move(a);
  }
  return h;
}

/// Single-vector forward.
Eigen::VectorXd mlp_forward(const MlpParams& mlp, const Eigen::VectorXd& x);

/// Reverse pass through a cached forward. `d_out` is dLoss/d(output post-activation).
/// Accumulates into `grad` (same shapes as `mlp`) and returns dLoss/dx.
Eigen::MatrixXd mlp_backward_batch(const MlpParams& mlp, const MlpCache<double>& cache,
                                   const Eigen::MatrixXd& x, const Eigen::MatrixXd& d_out,
                                   MlpParams& grad);

/// Element-wise maximum; an empty list yields zeros of `dim`. Throws on length mismatch.
Eigen::VectorXd max_pool(std::span<const Eigen::VectorXd> vectors, std::size_t dim);

}  // namespace gace
