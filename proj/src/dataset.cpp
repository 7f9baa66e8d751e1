#include "gace/dataset.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

namespace gace {

namespace {

static_assert(std::endian::native == std::endian::little,
              "point files are little-endian float32");

std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string read_text(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DatasetError("cannot open " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Parses "class cx cy cz dx dy dz yaw [score]" lines; blank lines and '#' comments skipped.
template <typename Fn>
void parse_records(std::istream& in, const DatasetManifest& manifest, const std::string& source,
                   bool with_score, Fn&& emit) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream fields(line);
    std::string name;
    fields >> name;
    const std::string where = source + ":" + std::to_string(line_no);
    std::uint32_t cls = 0;
    try {
      cls = manifest.class_id(name);
    } catch (const DatasetError& e) {
      throw DatasetError(where + ": " + e.what());
    }
    double v[8] = {};
    const int count = with_score ? 8 : 7;
    for (int k = 0; k < count; ++k) {
      std::string tok;
      if (!(fields >> tok)) throw DatasetError(where + ": expected " + std::to_string(count) + " numbers");
      const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v[k]);
      if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
        throw DatasetError(where + ": bad number '" + tok + "'");
      }
    }
    std::string extra;
    if (fields >> extra) throw DatasetError(where + ": unexpected trailing field '" + extra + "'");
    try {
      const BoundingBox3D box(v[0], v[1], v[2], v[3], v[4], v[5], v[6]);
      if (with_score && !(v[7] >= 0.0 && v[7] <= 1.0)) {
        throw DatasetError("score outside [0, 1]");
      }
      emit(box, cls, v[7]);
    } catch (const std::invalid_argument& e) {
      throw DatasetError(where + ": " + e.what());
    } catch (const DatasetError& e) {
      throw DatasetError(where + ": " + e.what());
    }
  }
}

void write_box(std::ostream& out, const std::string& name, const BoundingBox3D& b) {
  out << name << ' ' << fmt(b.cx) << ' ' << fmt(b.cy) << ' ' << fmt(b.cz) << ' ' << fmt(b.dx)
      << ' ' << fmt(b.dy) << ' ' << fmt(b.dz) << ' ' << fmt(b.yaw);
}

const std::string& class_name(std::span<const std::string> names, std::uint32_t id) {
  if (id >= names.size()) throw DatasetError("class id " + std::to_string(id) + " has no name");
  return names[id];
}

void write_file(const std::filesystem::path& file, const std::string& content) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw DatasetError("failed writing " + file.string());
}

}  // namespace

void DatasetManifest::validate() const {
  if (format_version != kFormatVersion) {
    throw DatasetError("unsupported dataset format version " + std::to_string(format_version));
  }
  if (channels != 4 && channels != 5) {
    throw DatasetError("channel count must be 4 or 5, got " + std::to_string(channels));
  }
  if (class_names.empty()) throw DatasetError("manifest lists no classes");
}

std::uint32_t DatasetManifest::class_id(const std::string& name) const {
  for (std::size_t i = 0; i < class_names.size(); ++i) {
    if (class_names[i] == name) return static_cast<std::uint32_t>(i);
  }
  throw DatasetError("unknown class name '" + name + "'");
}

void write_manifest(const std::filesystem::path& dir, const DatasetManifest& m) {
  m.validate();
  nlohmann::ordered_json j;
  j["format_version"] = m.format_version;
  j["channels"] = m.channels;
  j["class_names"] = m.class_names;
  auto frames = nlohmann::ordered_json::array();
  for (const auto& f : m.frames) frames.push_back({{"id", f.id}, {"points", f.point_count}});
  j["frames"] = std::move(frames);
  j["seed"] = m.seed;
  j["digest"] = m.digest;
  j["config"] = m.config.empty() ? nlohmann::ordered_json::object()
                                 : nlohmann::ordered_json::parse(m.config);
  std::filesystem::create_directories(dir);
  write_file(dir / kManifestFile, j.dump(2) + "\n");
}

DatasetManifest read_manifest(const std::filesystem::path& dir) {
  const auto path = dir / kManifestFile;
  if (!std::filesystem::exists(path)) throw DatasetError("no manifest at " + path.string());
  DatasetManifest m;
  try {
    const auto j = nlohmann::json::parse(read_text(path));
    m.format_version = j.at("format_version").get<std::uint32_t>();
    m.channels = j.at("channels").get<std::uint32_t>();
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    for (const auto& f : j.at("frames")) {
      m.frames.push_back({f.at("id").get<std::string>(), f.at("points").get<std::uint64_t>()});
    }
    m.seed = j.value("seed", std::uint64_t{0});
    m.digest = j.value("digest", std::string{});
    if (j.contains("config")) m.config = j.at("config").dump();
  } catch (const nlohmann::json::exception& e) {
    throw DatasetError(path.string() + ": " + e.what());
  }
  m.validate();
  return m;
}

void write_points(const std::filesystem::path& file, std::span<const Point> points,
                  std::uint32_t channels) {
  std::vector<float> buf;
  buf.reserve(points.size() * channels);
  for (const auto& p : points) {
    buf.push_back(static_cast<float>(p.x));
    buf.push_back(static_cast<float>(p.y));
    buf.push_back(static_cast<float>(p.z));
    buf.push_back(static_cast<float>(p.intensity));
    if (channels >= 5) buf.push_back(static_cast<float>(p.elongation));
  }
  std::string bytes(buf.size() * sizeof(float), '\0');
  if (!buf.empty()) std::memcpy(bytes.data(), buf.data(), bytes.size());
  write_file(file, bytes);
}

std::vector<Point> read_points(const std::filesystem::path& file, std::uint32_t channels,
                               std::uint64_t expected_points) {
  const std::string bytes = read_text(file);
  const std::size_t record = 4u * channels;
  if (bytes.size() % record != 0) {
    throw DatasetError(file.string() + ": truncated point file: size " +
                       std::to_string(bytes.size()) + " is not a multiple of " +
                       std::to_string(record) + "; partial record at byte offset " +
                       std::to_string(bytes.size() - bytes.size() % record));
  }
  const std::size_t n = bytes.size() / record;
  if (n != expected_points) {
    throw DatasetError(file.string() + ": holds " + std::to_string(bytes.size()) +
                       " bytes, expected " + std::to_string(expected_points) + " points x " +
                       std::to_string(channels) + " channels = " +
                       std::to_string(expected_points * record) +
                       " (channel count differs from the manifest?)");
  }
  std::vector<float> buf(n * channels);
  if (!buf.empty()) std::memcpy(buf.data(), bytes.data(), bytes.size());
  std::vector<Point> points(n);
  for (std::size_t i = 0; i < n; ++i) {
    const float* r = buf.data() + i * channels;
    points[i] = {r[0], r[1], r[2], r[3], channels >= 5 ? static_cast<double>(r[4]) : 0.0};
  }
  return points;
}

void write_detections(std::ostream& out, std::span<const Detection> dets,
                      std::span<const std::string> class_names) {
  for (const auto& d : dets) {
    write_box(out, class_name(class_names, d.class_id), d.box);
    out << ' ' << fmt(d.score) << '\n';
  }
}

void write_ground_truth(std::ostream& out, std::span<const GroundTruth> gts,
                        std::span<const std::string> class_names) {
  for (const auto& g : gts) {
    write_box(out, class_name(class_names, g.class_id), g.box);
    out << '\n';
  }
}

std::vector<Detection> parse_detections(std::istream& in, const DatasetManifest& manifest,
                                        const std::string& source) {
  std::vector<Detection> out;
  parse_records(in, manifest, source, true, [&](const BoundingBox3D& b, std::uint32_t c, double s) {
    out.push_back({b, c, s});
  });
  return out;
}

std::vector<GroundTruth> parse_ground_truth(std::istream& in, const DatasetManifest& manifest,
                                            const std::string& source) {
  std::vector<GroundTruth> out;
  parse_records(in, manifest, source, false,
                [&](const BoundingBox3D& b, std::uint32_t c, double) { out.push_back({b, c}); });
  return out;
}

std::vector<Detection> read_detections(const std::filesystem::path& file,
                                       const DatasetManifest& manifest) {
  std::istringstream in(read_text(file));
  return parse_detections(in, manifest, file.string());
}

std::vector<GroundTruth> read_ground_truth(const std::filesystem::path& file,
                                           const DatasetManifest& manifest) {
  std::istringstream in(read_text(file));
  return parse_ground_truth(in, manifest, file.string());
}

void save_detections(const std::filesystem::path& file, std::span<const Detection> dets,
                     std::span<const std::string> class_names) {
  std::ostringstream out;
  write_detections(out, dets, class_names);
  write_file(file, out.str());
}

std::filesystem::path points_path(const std::filesystem::path& dir, const std::string& id) {
  return dir / "points" / (id + ".bin");
}
std::filesystem::path labels_path(const std::filesystem::path& dir, const std::string& id) {
  return dir / "labels" / (id + ".txt");
}
std::filesystem::path detections_path(const std::filesystem::path& dir, const std::string& id) {
  return dir / "detections" / (id + ".txt");
}

void write_frame(const std::filesystem::path& dir, const DatasetManifest& manifest,
                 const Frame& frame) {
  if (frame.channels != manifest.channels) {
    throw DatasetError("frame '" + frame.frame_id + "' has " + std::to_string(frame.channels) +
                       " channels, manifest has " + std::to_string(manifest.channels));
  }
  write_points(points_path(dir, frame.frame_id), frame.points, manifest.channels);
  save_detections(detections_path(dir, frame.frame_id), frame.detections, manifest.class_names);
  if (frame.ground_truth) {
    std::ostringstream out;
    write_ground_truth(out, *frame.ground_truth, manifest.class_names);
    write_file(labels_path(dir, frame.frame_id), out.str());
  }
}

Frame read_frame(const std::filesystem::path& dir, const DatasetManifest& manifest,
                 std::size_t index, const FrameParts& parts) {
  if (index >= manifest.frames.size()) throw DatasetError("frame index out of range");
  const ManifestFrame& entry = manifest.frames[index];
  Frame f;
  f.frame_id = entry.id;
  f.channels = manifest.channels;
  if (parts.points) f.points = read_points(points_path(dir, entry.id), manifest.channels, entry.point_count);
  if (parts.detections) f.detections = read_detections(detections_path(dir, entry.id), manifest);
  if (parts.ground_truth) {
    const auto path = labels_path(dir, entry.id);
    if (std::filesystem::exists(path)) f.ground_truth = read_ground_truth(path, manifest);
  }
  return f;
}

}  // namespace gace
