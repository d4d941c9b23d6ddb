#pragma once

#include <cstddef>
#include <functional>

namespace somtp {

/// Worker count from SOMTP_THREADS (default 1).
int thread_count();

/// Calls fn(i) for i in [0, n) across `thread_count()` workers. Each index is
/// handled exactly once; callers write results into per-index slots so the
/// outcome does not depend on scheduling. The first exception is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace somtp
