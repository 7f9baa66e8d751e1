#include "gace/report.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace gace {

namespace {

/// Shortest round-trip representation.
std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string safe_name(const std::string& name) {
  std::string out;
  for (char c : name) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '-' || c == '_';
    out.push_back(ok ? c : '_');
  }
  return out.empty() ? std::string("class") : out;
}

}  // namespace

void write_report_table(std::ostream& out, const EvalReport& report) {
  const auto flags = out.flags();
  out << std::left << std::setw(14) << "class" << std::right << std::setw(8) << "gt"
      << std::setw(8) << "dets" << std::setw(9) << "AP" << std::setw(9) << "APH" << std::setw(9)
      << "AP@R40" << std::setw(9) << "APH@R40" << std::setw(10) << "oracleAP" << '\n';
  out << std::fixed << std::setprecision(4);
  for (const auto& c : report.classes) {
    out << std::left << std::setw(14) << c.name << std::right << std::setw(8) << c.num_gt
        << std::setw(8) << c.num_detections << std::setw(9) << c.ap << std::setw(9) << c.aph
        << std::setw(9) << c.ap_r40 << std::setw(9) << c.aph_r40 << std::setw(10) << c.oracle_ap;
    if (c.no_ground_truth) out << "  (no ground truth: AP reported as 0)";
    out << '\n';
  }
  out << std::left << std::setw(30) << "mean" << std::right << std::setw(9) << report.map
      << std::setw(9) << report.maph << std::setw(9) << report.map_r40 << std::setw(9)
      << report.maph_r40 << std::setw(10) << report.oracle_map << '\n';
  out.flags(flags);
}

std::string report_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["mAP"] = report.map;
  j["mAPH"] = report.maph;
  j["mAP_R40"] = report.map_r40;
  j["mAPH_R40"] = report.maph_r40;
  j["oracle_mAP"] = report.oracle_map;
  auto classes = nlohmann::ordered_json::array();
  for (const auto& c : report.classes) {
    nlohmann::ordered_json e;
    e["name"] = c.name;
    e["num_gt"] = c.num_gt;
    e["num_detections"] = c.num_detections;
    e["AP"] = c.ap;
    e["APH"] = c.aph;
    e["AP_R40"] = c.ap_r40;
    e["APH_R40"] = c.aph_r40;
    e["oracle_AP"] = c.oracle_ap;
    e["oracle_AP_R40"] = c.oracle_ap_r40;
    e["no_ground_truth"] = c.no_ground_truth;
    classes.push_back(std::move(e));
  }
  j["classes"] = std::move(classes);
  return j.dump(2) + "\n";
}

void write_curve_csv(std::ostream& out, const PrCurve& curve) {
  out << "threshold,precision,recall,heading_precision\n";
  for (const auto& p : curve.points) {
    out << fmt(p.threshold) << ',' << fmt(p.precision) << ',' << fmt(p.recall) << ','
        << fmt(p.heading_precision) << '\n';
  }
}

void write_curves(const std::filesystem::path& dir, const EvalReport& report) {
  std::filesystem::create_directories(dir);
  for (const auto& c : report.classes) {
    std::ofstream out(dir / (safe_name(c.name) + ".csv"));
    write_curve_csv(out, c.curve);
    if (!out) throw std::runtime_error("failed writing curves to " + dir.string());
  }
}

void write_conditional_csv(std::ostream& out, std::span<const BinPrecision> bins) {
  out << "lo,hi,detections,true_positives,precision\n";
  for (const auto& b : bins) {
    out << fmt(b.lo) << ',' << fmt(b.hi) << ',' << b.detections << ',' << b.true_positives << ',';
    if (b.precision) out << fmt(*b.precision);
    out << '\n';
  }
}

std::string curves_svg(const EvalReport& report) {
  constexpr double kSize = 400.0, kPad = 40.0;
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  std::ostringstream s;
  s << std::fixed << std::setprecision(2);
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kSize + 2 * kPad << "\" height=\""
    << kSize + 2 * kPad << "\">\n";
  s << "<rect x=\"" << kPad << "\" y=\"" << kPad << "\" width=\"" << kSize << "\" height=\""
    << kSize << "\" fill=\"none\" stroke=\"black\"/>\n";
  s << "<text x=\"" << kPad + kSize / 2 << "\" y=\"" << kSize + 1.7 * kPad
    << "\" text-anchor=\"middle\">recall</text>\n";
  s << "<text x=\"12\" y=\"" << kPad + kSize / 2 << "\">precision</text>\n";
  for (std::size_t c = 0; c < report.classes.size(); ++c) {
    const auto& cls = report.classes[c];
    const char* color = kColors[c % std::size(kColors)];
    s << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\"";
    for (const auto& p : cls.curve.points) {
      s << kPad + p.recall * kSize << ',' << kPad + (1.0 - p.precision) * kSize << ' ';
    }
    s << "\"/>\n";
    s << "<text x=\"" << kPad + 10 << "\" y=\"" << kPad + 20 + 18.0 * static_cast<double>(c)
      << "\" fill=\"" << color << "\">" << safe_name(cls.name) << " AP " << std::setprecision(4)
      << cls.ap << std::setprecision(2) << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace gace
