#include "gace/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>

namespace gace {

namespace {

double percentile95(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(v.size())));
  return v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
}

}  // namespace

BenchResult run_bench(const Rescorer& rescorer, std::span<const Frame> frames, std::size_t repeats) {
  BenchResult result;
  std::vector<std::vector<double>> samples(kBenchStages.size());
  for (const auto& f : frames) rescorer.rescore(f);  // warm-up
  double best_pass = 0.0;
  for (std::size_t r = 0; r < repeats; ++r) {
    double pass = 0.0;
    for (const auto& f : frames) {
      RescoreTimings t;
      const auto t0 = std::chrono::steady_clock::now();
      rescorer.rescore(f, &t);
      const double overall =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      const double values[] = {t.features.points_in_box, t.features.instance_features,
                               t.features.neighbor_query, t.net.instance, t.net.context,
                               t.net.fusion, overall};
      for (std::size_t s = 0; s < kBenchStages.size(); ++s) samples[s].push_back(values[s] * 1e3);
      pass += overall;
      ++result.frames;
    }
    if (r == 0 || pass < best_pass) best_pass = pass;
  }
  for (std::size_t s = 0; s < kBenchStages.size(); ++s) {
    const auto& v = samples[s];
    const double mean = v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    result.stages.push_back({kBenchStages[s], mean, percentile95(v)});
  }
  for (const auto& f : frames) {
    result.mean_detections += static_cast<double>(f.detections.size());
    result.mean_points += static_cast<double>(f.points.size());
  }
  if (!frames.empty()) {
    result.mean_detections /= static_cast<double>(frames.size());
    result.mean_points /= static_cast<double>(frames.size());
  }
  const double overall_ms = result.stages.back().mean_ms;
  result.frames_per_second = overall_ms > 0.0 ? 1e3 / overall_ms : 0.0;
  if (best_pass > 0.0) {
    result.best_pass_frames_per_second = static_cast<double>(frames.size()) / best_pass;
  }
  return result;
}

void write_bench_table(std::ostream& out, const BenchResult& r) {
  const auto flags = out.flags();
  out << std::left << std::setw(16) << "stage" << std::right << std::setw(10) << "mean_ms"
      << std::setw(10) << "p95_ms" << '\n';
  out << std::fixed << std::setprecision(3);
  for (const auto& s : r.stages) {
    out << std::left << std::setw(16) << s.stage << std::right << std::setw(10) << s.mean_ms
        << std::setw(10) << s.p95_ms << '\n';
  }
  out << std::setprecision(1) << "frames " << r.frames << ", detections/frame "
      << r.mean_detections << ", points/frame " << std::setprecision(0) << r.mean_points
      << ", throughput " << std::setprecision(1) << r.frames_per_second
      << " frames/s (fastest pass " << r.best_pass_frames_per_second << " frames/s)\n";
  out.flags(flags);
}

}  // namespace gace
