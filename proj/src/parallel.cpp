#include "hdan/parallel.hpp"

#include <atomic>

namespace hdan {

namespace {
std::atomic<int> g_max_threads{1};
}

int max_threads() { return g_max_threads.load(std::memory_order_relaxed); }

void set_max_threads(int n) {
    if (n < 1) n = 1;
    g_max_threads.store(n, std::memory_order_relaxed);
}

}  // namespace hdan
