#pragma once

#include <string>
#include <vector>

#include "gace/eval.hpp"
#include "gace/synth.hpp"
#include "gace/trainer.hpp"

namespace gace {

/// Frames [0, cfg.frames) of a synthetic benchmark split, generated in parallel.
std::vector<Frame> generate_frames(const SceneConfig& cfg, const DetectorErrorModel& detector);

/// Labeled feature cache of a synthetic split, generating each frame on demand.
FrameStore build_synthetic_store(const SceneConfig& cfg, const DetectorErrorModel& detector,
                                 const NormConfig& norm, const IouThresholds& thresholds);

/// Evaluation view of frames with the base detector's scores.
std::vector<EvalFrame> baseline_eval_frames(std::span<const Frame> frames);

/// Evaluation view of frames with rescored detections.
std::vector<EvalFrame> rescored_eval_frames(const Rescorer& rescorer, std::span<const Frame> frames);

/// One configuration of the ablation grid.
struct AblationVariant {
  std::string name;
  FeatureGroups groups;
  bool use_context = true;
  double lambda_iou = 0.5;
  double radius = 40.0;
  bool baseline = false;  // no training; base detector scores
};

/// Instance-group and contextual ablations plus the radius sweep {5, 15, 40, 80}.
std::vector<AblationVariant> ablation_grid();

struct AblationResult {
  AblationVariant variant;
  EvalReport report;
};

/// Trains one model per variant on `train` and evaluates on `eval`.
std::vector<AblationResult> run_ablations(const std::vector<Frame>& train,
                                          const std::vector<Frame>& eval,
                                          const std::vector<std::string>& class_names,
                                          const IouThresholds& thresholds, const TrainConfig& base,
                                          const std::vector<AblationVariant>& variants);

}  // namespace gace
