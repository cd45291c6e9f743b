#pragma once

#include <cstddef>
#include <functional>

namespace evdi {

// Worker count: `requested` when > 0, else EVDI_THREADS, else 1.
int resolve_threads(int requested);

// Calls fn(i) for i in [0, n) on up to `threads` workers. Each index runs
// exactly once; callers write to disjoint outputs so results do not depend on
// scheduling. The first exception thrown by any call is rethrown.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace evdi
