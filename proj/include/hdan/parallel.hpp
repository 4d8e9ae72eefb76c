#pragma once

#include <algorithm>
#include <cstdint>
#include <thread>
#include <vector>

namespace hdan {

// Worker-pool size; settable via the CLI --threads flag or HDAN_THREADS.
int max_threads();
void set_max_threads(int n);

// Runs fn(i) for i in [0, n). Each index is processed by exactly one thread
// and every fn(i) must be self-contained, so results are identical for any
// thread count.
template <class F>
void parallel_for(int64_t n, F&& fn) {
    int nt = max_threads();
    if (nt <= 1 || n <= 1) {
        for (int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    if (static_cast<int64_t>(nt) > n) nt = static_cast<int>(n);
    std::vector<std::thread> workers;
    workers.reserve(static_cast<size_t>(nt - 1));
    int64_t chunk = (n + nt - 1) / nt;
    for (int t = 1; t < nt; ++t) {
        int64_t lo = t * chunk, hi = std::min<int64_t>(n, lo + chunk);
        if (lo >= hi) break;
        workers.emplace_back([&fn, lo, hi] {
            for (int64_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (int64_t i = 0; i < std::min<int64_t>(chunk, n); ++i) fn(i);
    for (auto& w : workers) w.join();
}

}  // namespace hdan
