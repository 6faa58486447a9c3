#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace voxproto {

// Global worker cap shared by all parallel loops; set once from --threads.
int parallel_threads();
void set_parallel_threads(int n);

namespace detail {
// Nested parallel loops degrade to sequential execution so scene-level
// parallelism does not multiply with per-voxel parallelism.
inline thread_local bool in_parallel_region = false;
}  // namespace detail

// Runs fn(i) for i in [0, n). Each index must write only to its own output
// slot, so results are bitwise identical for any thread count. Work is split
// into contiguous ranges; exceptions propagate to the caller.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const int threads = std::min<std::size_t>(parallel_threads(), n);
  if (threads <= 1 || n <= 1 || detail::in_parallel_region) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  std::exception_ptr first_error;
  std::mutex error_mutex;
  const std::size_t chunk = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const std::size_t begin = static_cast<std::size_t>(t) * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&, begin, end]() {
      detail::in_parallel_region = true;
      try {
        for (std::size_t i = begin; i < end; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace voxproto
