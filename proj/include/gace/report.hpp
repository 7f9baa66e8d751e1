#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>

#include "gace/eval.hpp"

namespace gace {

/// Fixed-width per-class table followed by the mean row.
void write_report_table(std::ostream& out, const EvalReport& report);

/// Structured JSON. Output is a pure function of the report (no timestamps).
std::string report_json(const EvalReport& report);

/// One row per point: threshold,precision,recall,heading_precision.
void write_curve_csv(std::ostream& out, const PrCurve& curve);

/// Writes <dir>/<class>.csv for every class.
void write_curves(const std::filesystem::path& dir, const EvalReport& report);

/// Columns lo,hi,detections,true_positives,precision; precision left empty for empty bins.
void write_conditional_csv(std::ostream& out, std::span<const BinPrecision> bins);

/// Standalone SVG with one precision-recall polyline per class.
std::string curves_svg(const EvalReport& report);

}  // namespace gace
