#pragma once

#include <array>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "gace/trainer.hpp"

namespace gace {

/// Rescoring stages in reporting order; the last entry is the whole path.
inline constexpr std::array<const char*, 7> kBenchStages{
    "points_in_box", "features", "neighbor_query", "H_I", "H_C", "H_F", "overall"};

struct StageTiming {
  std::string stage;
  double mean_ms = 0.0;
  double p95_ms = 0.0;
};

struct BenchResult {
  std::vector<StageTiming> stages;  // kBenchStages order
  std::size_t frames = 0;           // timed frame evaluations
  double mean_detections = 0.0;
  double mean_points = 0.0;
  double frames_per_second = 0.0;   // 1000 / mean overall ms
  /// Frames over wall time of the fastest full pass; least disturbed by other load on the host.
  double best_pass_frames_per_second = 0.0;
};

/// Times Rescorer::rescore on every frame `repeats` times after one warm-up pass.
BenchResult run_bench(const Rescorer& rescorer, std::span<const Frame> frames, std::size_t repeats);

/// "stage mean_ms p95_ms" table followed by throughput.
void write_bench_table(std::ostream& out, const BenchResult& result);

}  // namespace gace
