#pragma once

#include <cstdint>
#include <thread>
#include <vector>

namespace nlb {

// Process-wide worker count for batch updates, simulation trials and the
// row-parallel matmul. Partitioning is always by row/index, so results are
// identical for any worker count.
int thread_count();
void set_thread_count(int n);

template <class Fn>
void parallel_for(std::int64_t n, Fn&& fn, int workers = 0) {
  if (workers <= 0) workers = thread_count();
  if (workers <= 1 || n < 2048) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::int64_t chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    std::int64_t lo = w * chunk;
    std::int64_t hi = lo + chunk < n ? lo + chunk : n;
    if (lo >= hi) break;
    pool.emplace_back([&fn, lo, hi] {
      for (std::int64_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace nlb
