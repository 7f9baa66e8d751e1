#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "gace/frame.hpp"
#include "gace/gace_net.hpp"

namespace gace {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  std::size_t epochs = 5;
  double lr = 0.001;
  LossConfig loss;          // lambda_iou 0.5
  std::size_t batch = 8;    // frames per optimizer step
  std::uint64_t seed = 0;
  NormConfig norm;          // radius 40 m
  ModelShape shape;
  FeatureGroups groups;
  bool use_context = true;
  bool detach_neighbor_embeddings = false;

  void validate() const;
};

/// Cached, normalized training inputs and targets of one frame.
struct FrameRecord {
  std::string frame_id;
  FrameInputs inputs;
  std::vector<std::uint8_t> u;
  std::vector<double> v;
};

/// Labeled feature cache built from the base detector's outputs. Raw points are not retained.
struct FrameStore {
  NormConfig norm;
  std::vector<FrameRecord> frames;

  std::size_t sample_count() const;
  std::vector<std::uint8_t> serialize() const;
  static FrameStore deserialize(const std::vector<std::uint8_t>& bytes);
  void save(const std::filesystem::path& path) const;
  /// Throws if the cache was built with a different normalization config.
  static FrameStore load(const std::filesystem::path& path, const NormConfig& expected);
};

using FrameLoader = std::function<Frame(std::size_t)>;

/// Frames are loaded on demand, one per task. Throws TrainingError naming any frame without
/// ground truth.
FrameStore build_training_set(std::size_t frame_count, const FrameLoader& load,
                              const NormConfig& norm, const IouThresholds& thresholds);
FrameStore build_training_set(const std::vector<Frame>& frames, const NormConfig& norm,
                              const IouThresholds& thresholds);

struct EpochStats {
  std::size_t epoch = 0;
  double total = 0.0;
  double focal = 0.0;
  double iou_l1 = 0.0;
  double seconds = 0.0;
};

/// Writes "epoch<TAB>total<TAB>focal<TAB>iou_l1<TAB>seconds".
void write_epoch_line(std::ostream& out, const EpochStats& stats);

using EpochCallback = std::function<void(const EpochStats&)>;

GaceModel train(const FrameStore& store, const TrainConfig& cfg,
                const EpochCallback& on_epoch = {});

struct RescoreTimings {
  FeatureTimings features;
  NetTimings net;
};

/// Single-precision inference wrapper around a trained model.
class Rescorer {
 public:
  explicit Rescorer(const GaceModel& model);

  /// One score per detection, input order. Boxes and classes are untouched.
  std::vector<double> rescore(const Frame& frame, RescoreTimings* timings = nullptr) const;
  const GaceModel& model() const { return model_; }

 private:
  GaceModel model_;
  GaceParams<float> params_;
};

std::vector<double> rescore(const GaceModel& model, const Frame& frame);

}  // namespace gace
