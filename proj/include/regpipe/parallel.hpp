#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace regpipe {

/// Worker count from REGPIPE_THREADS (0 or unset = hardware concurrency).
inline std::size_t thread_count() {
  std::size_t n = 0;
  if (const char* env = std::getenv("REGPIPE_THREADS")) {
    try {
      n = static_cast<std::size_t>(std::stoul(env));
    } catch (...) {
      n = 0;
    }
  }
  if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
  return n;
}

/// Calls body(begin, end) over contiguous chunks of [0, n). Results must be
/// written to per-index slots so that output is independent of scheduling.
template <class Body>
void parallel_chunks(std::size_t n, Body&& body, std::size_t min_chunk = 256) {
  if (n == 0) return;
  const std::size_t workers = std::min(thread_count(), std::max<std::size_t>(1, n / min_chunk));
  if (workers <= 1) {
    body(std::size_t{0}, n);
    return;
  }
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex error_mutex;
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&, begin, end] {
      try {
        body(begin, end);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

template <class Fn>
void parallel_for(std::size_t n, Fn&& fn, std::size_t min_chunk = 256) {
  parallel_chunks(
      n,
      [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) fn(i);
      },
      min_chunk);
}

}  // namespace regpipe
