#pragma once

#include <cstddef>
#include <functional>

namespace steik {

/// Worker count used by the batched evaluators. Defaults to STEIK_THREADS when
/// set, otherwise 1.
int thread_count();
void set_thread_count(int n);

/// Calls fn(i) for i in [0, n), spreading indices over thread_count() workers.
/// Each index runs exactly once; callers store results per index so the outcome
/// does not depend on the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace steik
