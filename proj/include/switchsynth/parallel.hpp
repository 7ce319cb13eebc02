#pragma once

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace switchsynth {

// Thread count from SWITCHSYNTH_THREADS, falling back to 1.
inline int default_threads() {
    if (const char* s = std::getenv("SWITCHSYNTH_THREADS")) {
        const int n = std::atoi(s);
        if (n > 0) return n;
    }
    return 1;
}

// Calls fn(i) for i in [0, n) over contiguous chunks. Callers write results by index, so output
// never depends on the number of threads.
template <class Fn>
void parallel_for(long n, int threads, Fn&& fn) {
    threads = static_cast<int>(std::max<long>(1, std::min<long>(threads, n)));
    if (threads <= 1) {
        for (long i = 0; i < n; ++i) fn(i);
        return;
    }
    std::exception_ptr err;
    std::mutex mu;
    std::vector<std::thread> pool;
    const long chunk = (n + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
        const long b = t * chunk, e = std::min(n, b + chunk);
        if (b >= e) break;
        pool.emplace_back([&, b, e] {
            try {
                for (long i = b; i < e; ++i) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(mu);
                if (!err) err = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

}  // namespace switchsynth
