#include "gace/mlp.hpp"

#include <cmath>

namespace gace {

void init_fan_in_uniform(MlpParams& mlp, std::mt19937_64& rng) {
  for (auto& l : mlp.layers) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.in_dim()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    // Row-major fill order so the draw sequence does not depend on storage layout.
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = dist(rng);
    }
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias(r) = dist(rng);
  }
}

Eigen::VectorXd mlp_forward(const MlpParams& mlp, const Eigen::VectorXd& x) {
  mlp.validate();
  const Eigen::MatrixXd out = mlp_forward_batch<double>(mlp, x);
  return out.col(0);
}

Eigen::MatrixXd mlp_backward_batch(const MlpParams& mlp, const MlpCache<double>& cache,
                                   const Eigen::MatrixXd& x, const Eigen::MatrixXd& d_out,
                                   MlpParams& grad) {
  Eigen::MatrixXd d = d_out;
  for (std::size_t k = mlp.layers.size(); k-- > 0;) {
    const auto& l = mlp.layers[k];
    switch (l.activation) {
      case Activation::kIdentity: break;
      case Activation::kRelu:
        d = (cache.pre[k].array() > 0.0).select(d, 0.0);
        break;
      case Activation::kLogistic:
        d = (d.array() * cache.post[k].array() * (1.0 - cache.post[k].array())).matrix();
        break;
    }
    const Eigen::MatrixXd& input = (k == 0) ? x : cache.post[k - 1];
    grad.layers[k].weight.noalias() += d * input.transpose();
    grad.layers[k].bias += d.rowwise().sum();
    Eigen::MatrixXd d_in = l.weight.transpose() * d;
    d = std::move(d_in);
  }
  return d;
}

Eigen::VectorXd max_pool(std::span<const Eigen::VectorXd> vectors, std::size_t dim) {
  if (vectors.empty()) return Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
  Eigen::VectorXd out = vectors.front();
  for (const auto& v : vectors) {
    if (v.size() != out.size()) throw std::invalid_argument("max_pool length mismatch");
    out = out.cwiseMax(v);
  }
  return out;
}

}  // namespace gace
