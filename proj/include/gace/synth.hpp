#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "gace/frame.hpp"

namespace gace {

inline constexpr std::size_t kSynthClassCount = 3;
enum SynthClass : std::uint32_t { kVehicle = 0, kPedestrian = 1, kCyclist = 2 };
const std::vector<std::string>& synth_class_names();

struct SceneConfig {
  std::uint64_t seed = 0;
  std::size_t frames = 1;
  /// Mean object count per class (Poisson).
  std::array<double, kSynthClassCount> mean_objects{14.0, 7.0, 3.0};
  /// Share of vehicles drawn from the long (6-13 m) mode; the rest are 4-5 m.
  double long_vehicle_fraction = 0.25;
  double fov_radius = 70.0;
  double min_range = 4.0;
  double ground_z = -1.8;
  /// Probability an object loses a random contiguous azimuth slice of its points.
  double occlusion_rate = 0.3;
  /// Probability a pedestrian or vehicle seeds a group (pedestrian cluster, vehicle convoy).
  double grouping_rate = 0.5;
  /// Ground returns and unlabeled clutter (walls, poles, vegetation).
  bool ground_clutter = true;
  std::array<double, 3> mean_clutter{3.0, 5.0, 5.0};  // walls, poles, vegetation
  /// Probability a vehicle spawns a multipath ghost 6-9 m further along the line of sight.
  double ghost_rate = 0.35;
  /// Expected points per m^2 of facing surface at 1 m range.
  double point_density = 20000.0;
  double ground_points = 20000.0;  // expected ground returns per frame
  std::uint32_t channels = 5;

  void validate() const;
};

/// Error statistics of the simulated black-box detector.
struct DetectorErrorModel {
  std::string name = "A";
  // Detection probability: logistic in log(1 + points) around log(1 + detect_mid_points).
  double detect_mid_points = 8.0;
  double detect_slope = 2.5;
  double min_detect_prob = 0.0;
  // Localization jitter: center and extents as a fraction of the extent, yaw in radians.
  double jitter_center_frac = 0.03;
  double jitter_dim_frac = 0.03;
  double jitter_yaw = 0.03;
  std::array<double, kSynthClassCount> heading_flip_prob{0.03, 0.15, 0.08};
  // Scores are logistic(logit); TP logit rises with point count and localization quality.
  double tp_logit_mean = 0.6;
  double tp_count_slope = 0.35;
  double quality_gain = 3.0;  // score-vs-quality correlation strength
  double fp_logit_mean = 0.3;
  double score_noise = 1.0;
  // False-positive mechanisms.
  std::array<double, kSynthClassCount> duplicate_prob{0.10, 0.10, 0.10};
  double duplicate_long_band_mult = 3.0;    // vehicles of length 6-13 m
  double duplicate_axial_view_mult = 2.0;   // viewed along the heading axis
  double confusion_prob = 0.15;             // pedestrian <-> cyclist
  double wall_fp_prob = 0.8;                // walls read as long vehicles
  double pole_fp_prob = 0.5;                // poles read as pedestrians
  double vegetation_fp_prob = 0.4;
  double ghost_fp_prob = 0.7;
  double mean_empty_fps = 2.0;

  void validate() const;
  /// No jitter, no flips, no false positives, every object detected.
  static DetectorErrorModel perfect();
};

DetectorErrorModel error_model_a();
/// A different detector: other calibration, jitter and false-positive mix.
DetectorErrorModel error_model_b();
/// Resolves "A" or "B" (case-insensitive). Throws std::invalid_argument otherwise.
DetectorErrorModel error_model_by_name(const std::string& name);

/// Deterministic per-(seed, index) stream seed.
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index, std::uint64_t stream);

/// Frame id of synthetic frame `index`.
std::string synth_frame_id(std::size_t index);

/// Surface returns of one object seen from the sensor at the origin: Poisson counts with mean
/// density * face area * cos(incidence) / range^2 on every facing side.
std::vector<Point> sample_object_points(const BoundingBox3D& box, SynthClass cls,
                                        const SceneConfig& cfg, std::mt19937_64& rng);

/// Points, ground truth and no detections. Identical (cfg, index) gives an identical frame.
Frame generate_scene(const SceneConfig& cfg, std::size_t index);

/// Detections for a frame with ground truth. Scores are in [0, 1].
std::vector<Detection> simulate_detector(const Frame& frame, const DetectorErrorModel& model,
                                         std::uint64_t seed);

/// generate_scene followed by simulate_detector on an independent stream.
Frame generate_frame(const SceneConfig& cfg, const DetectorErrorModel& model, std::size_t index);

struct BenchmarkPreset {
  std::string name;
  SceneConfig train;
  SceneConfig eval;  // different seed
  DetectorErrorModel detector;
};

/// "bench-v1": 400 train frames, 100 eval frames, 3 classes, detector A.
BenchmarkPreset bench_v1(std::uint64_t seed = 1);

/// Dense frames for throughput measurement: about 100 detections and 100k points.
SceneConfig throughput_scene(std::uint64_t seed = 7);

}  // namespace gace
