#pragma once

#include <cstddef>
#include <functional>

namespace hpd::util {

// Worker cap: HPDKIT_THREADS when set (clamped to >= 1), else hardware
// concurrency.
size_t worker_count();

// Runs fn(i) for i in [0, n) across workers. Each index must touch disjoint
// state; callers that reduce results must do so in index order afterwards so
// output is identical for any worker count.
void parallel_for(size_t n, const std::function<void(size_t)>& fn);

}  // namespace hpd::util
