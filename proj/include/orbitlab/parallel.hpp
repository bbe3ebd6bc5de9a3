#pragma once

// Fixed-partition parallel loops. Work is split into chunks whose boundaries
// do not depend on the worker count, so chunk-ordered merges are identical for
// any number of workers.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace orbitlab {

inline unsigned resolve_workers(unsigned workers) {
  if (workers != 0) return workers;
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(chunk_index, begin, end) for every chunk of [0, n). Chunks are
/// claimed dynamically; the caller merges per-chunk results by index.
template <class Fn>
void parallel_chunks(std::size_t n, std::size_t chunk_count, unsigned workers, Fn&& fn) {
  if (n == 0) return;
  chunk_count = std::clamp<std::size_t>(chunk_count, 1, n);
  auto bounds = [&](std::size_t i) { return n * i / chunk_count; };
  workers = std::min<unsigned>(resolve_workers(workers), static_cast<unsigned>(chunk_count));
  if (workers <= 1) {
    for (std::size_t i = 0; i < chunk_count; ++i) fn(i, bounds(i), bounds(i + 1));
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < chunk_count; i = next++) {
        try {
          fn(i, bounds(i), bounds(i + 1));
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace orbitlab
