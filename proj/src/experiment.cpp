#include "gace/experiment.hpp"

#include "gace/parallel.hpp"

namespace gace {

std::vector<Frame> generate_frames(const SceneConfig& cfg, const DetectorErrorModel& detector) {
  std::vector<Frame> frames(cfg.frames);
  parallel_for(cfg.frames, [&](std::size_t i) { frames[i] = generate_frame(cfg, detector, i); });
  return frames;
}

FrameStore build_synthetic_store(const SceneConfig& cfg, const DetectorErrorModel& detector,
                                 const NormConfig& norm, const IouThresholds& thresholds) {
  return build_training_set(
      cfg.frames, [&](std::size_t i) { return generate_frame(cfg, detector, i); }, norm,
      thresholds);
}

std::vector<EvalFrame> baseline_eval_frames(std::span<const Frame> frames) {
  return make_eval_frames(frames);
}

std::vector<EvalFrame> rescored_eval_frames(const Rescorer& rescorer, std::span<const Frame> frames) {
  std::vector<EvalFrame> out = make_eval_frames(frames);
  parallel_for(frames.size(), [&](std::size_t i) {
    const auto scores = rescorer.rescore(frames[i]);
    for (std::size_t k = 0; k < scores.size(); ++k) out[i].detections[k].score = scores[k];
  });
  return out;
}

std::vector<AblationVariant> ablation_grid() {
  // The base detector's score stays an input in every trained variant.
  FeatureGroups all = FeatureGroups::all();
  all.keep_score = true;
  auto without = [&](auto member) {
    FeatureGroups g = all;
    g.*member = false;
    return g;
  };
  FeatureGroups none = FeatureGroups::none();
  none.keep_score = true;
  std::vector<AblationVariant> grid;
  grid.push_back({"baseline", all, false, 0.5, 40.0, true});
  grid.push_back({"instance+contextual", all, true, 0.5, 40.0, false});
  grid.push_back({"instance-only", all, false, 0.5, 40.0, false});
  grid.push_back({"contextual-only", none, true, 0.5, 40.0, false});
  grid.push_back({"no-box", without(&FeatureGroups::box), true, 0.5, 40.0, false});
  grid.push_back({"no-num-points", without(&FeatureGroups::num_points), true, 0.5, 40.0, false});
  grid.push_back({"no-viewing-angle", without(&FeatureGroups::viewing_angle), true, 0.5, 40.0, false});
  grid.push_back({"no-statistics", without(&FeatureGroups::statistics), true, 0.5, 40.0, false});
  grid.push_back({"no-iou-loss", all, true, 0.0, 40.0, false});
  for (double r : {5.0, 15.0, 80.0}) {
    grid.push_back({"radius-" + std::to_string(static_cast<int>(r)), all, true, 0.5, r, false});
  }
  return grid;
}

std::vector<AblationResult> run_ablations(const std::vector<Frame>& train_frames,
                                          const std::vector<Frame>& eval,
                                          const std::vector<std::string>& class_names,
                                          const IouThresholds& thresholds, const TrainConfig& base,
                                          const std::vector<AblationVariant>& variants) {
  std::vector<AblationResult> results;
  std::vector<std::pair<double, FrameStore>> stores;  // by radius
  auto store_for = [&](const NormConfig& norm) -> const FrameStore& {
    for (const auto& [radius, store] : stores) {
      if (radius == norm.radius) return store;
    }
    stores.emplace_back(norm.radius, build_training_set(train_frames, norm, thresholds));
    return stores.back().second;
  };
  for (const auto& v : variants) {
    AblationResult r{v, {}};
    if (v.baseline) {
      r.report = evaluate(baseline_eval_frames(eval), class_names, thresholds);
    } else {
      TrainConfig cfg = base;
      cfg.groups = v.groups;
      cfg.use_context = v.use_context;
      cfg.loss.lambda_iou = v.lambda_iou;
      cfg.norm.radius = v.radius;
      const GaceModel model = train(store_for(cfg.norm), cfg);
      r.report = evaluate(rescored_eval_frames(Rescorer(model), eval), class_names, thresholds);
    }
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace gace
