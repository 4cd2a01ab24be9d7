#pragma once

#include <cstddef>
#include <functional>

namespace rodlimit {

/// Worker count: hardware concurrency, capped by RODLIMIT_THREADS when set.
unsigned worker_count();

/// Calls fn(begin, end) on [0, n) split into fixed-size chunks. The chunking
/// does not depend on the worker count, so callers that reduce per-chunk or
/// per-item results in index order get bit-identical output for any thread
/// count. Exceptions thrown by fn are rethrown (the lowest chunk wins).
void parallel_for(std::size_t n, std::size_t chunk, const std::function<void(std::size_t, std::size_t)>& fn);

} // namespace rodlimit
