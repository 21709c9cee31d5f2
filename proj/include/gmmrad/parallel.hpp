#pragma once

#include <cstddef>
#include <functional>

namespace gmmrad {

/// Environment variable overriding the number of worker threads.
inline constexpr const char* kWorkersEnv = "GMMRAD_WORKERS";

/// Worker count from GMMRAD_WORKERS, else the hardware concurrency (>= 1).
std::size_t worker_count();

/// Runs body(i) for i in [0, n) on up to worker_count() threads. Callers write
/// results into pre-sized slots indexed by i, so output never depends on
/// scheduling. If any invocation throws, the exception from the lowest index
/// is rethrown after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace gmmrad
