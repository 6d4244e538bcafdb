#pragma once

#include <cstddef>
#include <functional>

namespace sep {

// Number of worker threads to use: min(hardware, SEP_PIPELINE_THREADS if
// set). Always >= 1.
size_t worker_thread_count();

// Runs fn(i) for i in [0, n) across worker threads. Tasks must write only
// to their own output slots; completion order does not affect results, so
// output is independent of scheduling. Exceptions are captured and the
// first one (by index) is rethrown after all workers join.
void parallel_for(size_t n, const std::function<void(size_t)>& fn);

}  // namespace sep
