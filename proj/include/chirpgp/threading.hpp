#pragma once

#include <cstddef>
#include <exception>
#include <functional>

namespace chirpgp {

/// Worker-pool size: CHIRPGP_THREADS when set (>= 1), otherwise the
/// available hardware parallelism.
std::size_t worker_count();

/// Runs fn(i) for i in [0, n) across up to worker_count() threads. Results
/// must not depend on scheduling; the first exception thrown by any task is
/// rethrown on the calling thread after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace chirpgp
