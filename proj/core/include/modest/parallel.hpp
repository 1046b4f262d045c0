#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace modest {

// Chunked parallel loop. Each index writes into its own output slot, so
// callers that reduce afterwards do it serially in index order and get
// bit-identical results for any worker count.
template <typename Fn>
void parallel_for(std::size_t n, int num_threads, Fn&& fn) {
  if (num_threads <= 0) {
    num_threads = static_cast<int>(std::thread::hardware_concurrency());
    if (num_threads <= 0) num_threads = 1;
  }
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(num_threads), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t lo = w * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace modest
