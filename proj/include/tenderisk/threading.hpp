#pragma once

#include <atomic>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace tenderisk {

/// Run fn(i) for i in [0, count) on up to `jobs` threads. Tasks must be
/// independent and write only to their own output slot; results are then
/// identical for any job count. Exceptions propagate from the first
/// failing task.
void parallel_for(size_t count, int jobs, const std::function<void(size_t)>& fn);

/// Resolve a --jobs argument: 0 means hardware concurrency.
int resolve_jobs(int jobs);

} // namespace tenderisk
