#pragma once

#include <cstddef>
#include <functional>

namespace temi {

/// Worker count used when a caller passes 0: TEMI_THREADS if set, else hardware concurrency.
[[nodiscard]] unsigned default_threads();

/// Runs body(i) for i in [0, n) on up to `threads` workers (0 = default_threads()).
/// Each index is visited exactly once; the first exception thrown is rethrown after all workers join.
/// Callers keep results bit-identical across thread counts by writing to per-index slots only.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& body);

} // namespace temi
