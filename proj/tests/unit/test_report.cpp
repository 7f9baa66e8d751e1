#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gace/report.hpp"

using namespace gace;

namespace {

/// Two classes with ground truth and one without. Vehicle: one TP then one FP.
EvalReport sample_report() {
  EvalFrame f;
  f.frame_id = "f0";
  const BoundingBox3D car(0, 0, 0, 4, 2, 1.5, 0);
  const BoundingBox3D walker(10, 0, 0, 0.8, 0.8, 1.8, 0);
  f.ground_truth = {{car, 0}, {walker, 1}};
  f.gt_ignored = {0, 0};
  f.detections = {{car, 0, 0.9},
                  {BoundingBox3D(20, 0, 0, 4, 2, 1.5, 0), 0, 0.4},
                  {walker, 1, 0.7}};
  const std::vector<EvalFrame> frames = {f};
  const std::vector<std::string> names = {"Vehicle", "Pedestrian", "Cyclist/Bike"};
  return evaluate(frames, names, IouThresholds::defaults(3));
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  return lines;
}

}  // namespace

TEST_CASE("table lists every class and the mean") {
  const auto report = sample_report();
  std::ostringstream out;
  write_report_table(out, report);
  const auto lines = lines_of(out.str());
  REQUIRE(lines.size() == 5);
  CHECK(lines[0].rfind("class", 0) == 0);
  CHECK(lines[1].rfind("Vehicle", 0) == 0);
  CHECK(lines[1].find("1.0000") != std::string::npos);
  CHECK(lines[3].find("no ground truth") != std::string::npos);
  CHECK(lines[4].rfind("mean", 0) == 0);
  // Stream formatting state is restored.
  CHECK((out.flags() & std::ios::fixed) == 0);
}

TEST_CASE("JSON is a pure function of the report") {
  const auto report = sample_report();
  const std::string a = report_json(report);
  CHECK(a == report_json(sample_report()));
  const auto j = nlohmann::json::parse(a);
  CHECK(j["mAP"].get<double>() == doctest::Approx(report.map));
  REQUIRE(j["classes"].size() == 3);
  CHECK(j["classes"][0]["name"] == "Vehicle");
  CHECK(j["classes"][0]["num_gt"] == 1);
  CHECK(j["classes"][0]["num_detections"] == 2);
  CHECK(j["classes"][0]["AP"].get<double>() == 1.0);
  CHECK(j["classes"][2]["no_ground_truth"] == true);
  // Mean is over the two classes with ground truth.
  CHECK(report.map == doctest::Approx(1.0));
}

TEST_CASE("curve CSV has one row per ranked detection") {
  const auto report = sample_report();
  std::ostringstream out;
  write_curve_csv(out, report.classes[0].curve);
  const auto lines = lines_of(out.str());
  REQUIRE(lines.size() == 3);
  CHECK(lines[0] == "threshold,precision,recall,heading_precision");
  CHECK(lines[1] == "0.9,1,1,1");
  CHECK(lines[2] == "0.4,0.5,1,0.5");
}

TEST_CASE("conditional CSV leaves empty bins blank") {
  std::vector<BinPrecision> bins(2);
  bins[0] = {0.0, 3.5, 4, 3, 0.75};
  bins[1] = {3.5, 7.0, 0, 0, std::nullopt};
  std::ostringstream out;
  write_conditional_csv(out, bins);
  const auto lines = lines_of(out.str());
  REQUIRE(lines.size() == 3);
  CHECK(lines[0] == "lo,hi,detections,true_positives,precision");
  CHECK(lines[1] == "0,3.5,4,3,0.75");
  CHECK(lines[2] == "3.5,7,0,0,");
}

TEST_CASE("curve files and SVG") {
  const auto report = sample_report();
  const auto dir = std::filesystem::temp_directory_path() / "gace_test_report_curves";
  std::filesystem::remove_all(dir);
  write_curves(dir, report);
  CHECK(std::filesystem::exists(dir / "Vehicle.csv"));
  CHECK(std::filesystem::exists(dir / "Pedestrian.csv"));
  // Unsafe characters in class names are replaced.
  CHECK(std::filesystem::exists(dir / "Cyclist_Bike.csv"));
  std::ifstream in(dir / "Cyclist_Bike.csv");
  std::string header, extra;
  std::getline(in, header);
  CHECK(header == "threshold,precision,recall,heading_precision");
  CHECK_FALSE(std::getline(in, extra));
  std::filesystem::remove_all(dir);

  const std::string svg = curves_svg(report);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  std::size_t polylines = 0;
  for (auto pos = svg.find("<polyline"); pos != std::string::npos;
       pos = svg.find("<polyline", pos + 1)) {
    ++polylines;
  }
  CHECK(polylines == 3);
  CHECK(svg == curves_svg(report));
}
