#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gace/frame.hpp"

namespace gace {

/// Malformed or inconsistent dataset content.
class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ManifestFrame {
  std::string id;
  std::uint64_t point_count = 0;
};

/// Directory layout:
///   manifest.json
///   points/<id>.bin       little-endian float32, row-major N x channels
///   labels/<id>.txt       ground truth, "class cx cy cz dx dy dz yaw"
///   detections/<id>.txt   detector output, "class cx cy cz dx dy dz yaw score"
struct DatasetManifest {
  static constexpr std::uint32_t kFormatVersion = 1;

  std::uint32_t format_version = kFormatVersion;
  std::uint32_t channels = 5;
  std::vector<std::string> class_names;
  std::vector<ManifestFrame> frames;
  std::uint64_t seed = 0;
  std::string digest;  // of the generating configuration
  std::string config;  // free-form JSON text of the generating configuration

  void validate() const;
  std::uint32_t class_id(const std::string& name) const;  // throws DatasetError
};

inline constexpr const char* kManifestFile = "manifest.json";

void write_manifest(const std::filesystem::path& dir, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& dir);

/// Points as float32. Throws DatasetError with the byte offset of a partial record, or on a
/// point count that disagrees with `expected_points`.
void write_points(const std::filesystem::path& file, std::span<const Point> points,
                  std::uint32_t channels);
std::vector<Point> read_points(const std::filesystem::path& file, std::uint32_t channels,
                               std::uint64_t expected_points);

void write_detections(std::ostream& out, std::span<const Detection> dets,
                      std::span<const std::string> class_names);
std::vector<Detection> parse_detections(std::istream& in, const DatasetManifest& manifest,
                                        const std::string& source);
void write_ground_truth(std::ostream& out, std::span<const GroundTruth> gts,
                        std::span<const std::string> class_names);
std::vector<GroundTruth> parse_ground_truth(std::istream& in, const DatasetManifest& manifest,
                                            const std::string& source);

std::vector<Detection> read_detections(const std::filesystem::path& file,
                                       const DatasetManifest& manifest);
std::vector<GroundTruth> read_ground_truth(const std::filesystem::path& file,
                                           const DatasetManifest& manifest);
void save_detections(const std::filesystem::path& file, std::span<const Detection> dets,
                     std::span<const std::string> class_names);

struct FrameParts {
  bool points = true;
  bool detections = true;
  bool ground_truth = true;  // skipped silently when the labels file is absent
};

/// Writes points, detections and (if present) ground truth of one frame.
void write_frame(const std::filesystem::path& dir, const DatasetManifest& manifest,
                 const Frame& frame);
/// Reads frame `index` of the manifest.
Frame read_frame(const std::filesystem::path& dir, const DatasetManifest& manifest,
                 std::size_t index, const FrameParts& parts = {});

std::filesystem::path points_path(const std::filesystem::path& dir, const std::string& id);
std::filesystem::path labels_path(const std::filesystem::path& dir, const std::string& id);
std::filesystem::path detections_path(const std::filesystem::path& dir, const std::string& id);

}  // namespace gace
