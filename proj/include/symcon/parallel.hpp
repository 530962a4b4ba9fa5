#pragma once

#include <cstddef>
#include <functional>

namespace symcon {

/// Worker count: SYMCON_THREADS when set to a positive integer, else the
/// hardware concurrency (at least 1).
unsigned thread_count();

/// Runs body(i) for i in [0, n) on up to thread_count() threads. Work is split
/// into contiguous chunks. The first exception thrown (lowest chunk) is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace symcon
