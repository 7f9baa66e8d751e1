#pragma once

#include <cstddef>
#include <functional>

namespace gace {

inline constexpr const char* kThreadsEnv = "GACE_NUM_THREADS";

/// Worker count: GACE_NUM_THREADS if set and positive, else hardware concurrency.
/// Affects speed only; every parallel stage writes results by index.
std::size_t thread_count();

/// Runs fn(i) for i in [0, n) on up to thread_count() workers. Rethrows the first exception.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace gace
