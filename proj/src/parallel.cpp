#include "nlb/parallel.hpp"

#include <atomic>

namespace nlb {

namespace {
std::atomic<int> g_threads{1};
}

int thread_count() { return g_threads.load(std::memory_order_relaxed); }

void set_thread_count(int n) {
  if (n < 1) n = 1;
  g_threads.store(n, std::memory_order_relaxed);
}

}  // namespace nlb
