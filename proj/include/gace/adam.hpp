#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace gace {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment buffers, one per parameter block, plus the step counter.
struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t step = 0;

  static AdamState zeros_like(std::span<const std::span<double>> params);
};

/// One bias-corrected Adam update. Throws std::invalid_argument on shape mismatch.
void adam_step(std::span<const std::span<double>> params,
               std::span<const std::span<double>> grads, AdamState& state,
               const AdamConfig& cfg);

}  // namespace gace
