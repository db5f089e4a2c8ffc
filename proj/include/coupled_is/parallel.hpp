#pragma once

#include <cstddef>
#include <functional>

namespace coupled_is {

/// Worker count: COUPLED_IS_THREADS if set and positive, else hardware concurrency.
unsigned worker_count();

/// Calls body(i) for i in [0, count) on up to worker_count() threads. Each index
/// runs exactly once; results must be written to per-index slots so the outcome
/// does not depend on scheduling. The first exception thrown is rethrown.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace coupled_is
