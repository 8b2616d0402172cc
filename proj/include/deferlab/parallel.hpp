#pragma once

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace deferlab {

/// Worker cap: hardware concurrency, optionally lowered by the
/// DEFER_LAB_THREADS environment variable.
inline int worker_count() {
    int n = static_cast<int>(std::thread::hardware_concurrency());
    if (n < 1) n = 1;
    if (const char* env = std::getenv("DEFER_LAB_THREADS")) {
        const int cap = std::atoi(env);
        if (cap >= 1) n = std::min(n, cap);
    }
    return n;
}

/// Static-sharded parallel loop. Each index must write only its own
/// output slot; results are then independent of the thread count, which
/// keeps artifacts bit-reproducible under any DEFER_LAB_THREADS setting.
template <typename F>
void parallel_for(long n, F&& body) {
    const long workers = std::min<long>(worker_count(), n);
    if (workers <= 1) {
        for (long i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> threads;
    threads.reserve(workers);
    for (long w = 0; w < workers; ++w) {
        const long lo = n * w / workers;
        const long hi = n * (w + 1) / workers;
        threads.emplace_back([lo, hi, &body] {
            for (long i = lo; i < hi; ++i) body(i);
        });
    }
    for (auto& t : threads) t.join();
}

}  // namespace deferlab
