#include "extsub/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace extsub {

static std::atomic<std::size_t> g_threads{0};
static bool g_threads_set = false;

void set_thread_count(std::size_t n) {
    g_threads.store(n);
    g_threads_set = true;
}

std::size_t thread_count() {
    if (g_threads_set && g_threads.load() > 0) {
        return g_threads.load();
    }
    if (const char * env = std::getenv("EXTSUB_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) return (std::size_t)v;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? hw : 1;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)> & fn) {
    const std::size_t workers = std::min(thread_count(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; i++) fn(i);
        return;
    }
    const std::size_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; w++) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(lo + chunk, n);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (std::size_t i = lo; i < hi; i++) fn(i);
        });
    }
    for (auto & t : pool) t.join();
}

} // namespace extsub
