#pragma once

#include <cstddef>
#include <functional>

namespace arrange {

/// Worker count from ARRANGE_THREADS (unset or 0 = hardware concurrency), at least 1.
int worker_count();

/// Runs fn(i) for i in [0, n) on up to worker_count() threads. Each index is
/// handled exactly once; callers write results into per-index slots and reduce
/// them in index order, so output never depends on the thread count. The first
/// exception thrown by any task is rethrown after all workers stop.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace arrange
