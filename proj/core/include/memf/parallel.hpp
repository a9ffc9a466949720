#pragma once

#include <cstddef>
#include <functional>

namespace memf {

/// Worker cap from MEMFORECAST_THREADS (default: hardware concurrency).
std::size_t worker_cap();

/// Runs fn(i) for i in [0, n). Splits into contiguous chunks across up to
/// worker_cap() threads; fn must only write outputs indexed by i, which keeps
/// results identical to the serial order.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

} // namespace memf
