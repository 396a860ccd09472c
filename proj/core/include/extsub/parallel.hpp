#pragma once

#include <cstddef>
#include <functional>

namespace extsub {

// Process-wide worker count for parallel_for. 0 means hardware concurrency.
// Resolution order: explicit set_thread_count() > EXTSUB_THREADS env > hardware.
void        set_thread_count(std::size_t n);
std::size_t thread_count();

// Runs fn(i) for i in [0, n). Work is split into static contiguous chunks,
// one per worker; each index is handled by exactly one thread, so any fn
// that is itself deterministic yields bit-identical results at any worker
// count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)> & fn);

} // namespace extsub
