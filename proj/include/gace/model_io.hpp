#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "gace/gace_net.hpp"

namespace gace {

class ModelFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Binary little-endian model image: "GACE" magic, version, dimensions, normalization config,
/// feature groups, seed, then per-layer row-major float32 weights and biases.
std::vector<std::uint8_t> serialize_model(const GaceModel& model);
GaceModel deserialize_model(const std::vector<std::uint8_t>& bytes);

void save_model(const GaceModel& model, const std::filesystem::path& path);
GaceModel load_model(const std::filesystem::path& path);

}  // namespace gace
