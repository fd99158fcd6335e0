#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace bayesrank {

/// Worker count used when a caller passes 0: $BAYESRANK_WORKERS if set,
/// otherwise the hardware concurrency.
inline unsigned default_workers() {
  if (const char* env = std::getenv("BAYESRANK_WORKERS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n > 0) return static_cast<unsigned>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(begin, end) over contiguous chunks of [0, n). Chunks are static so
/// results written per-index are identical for every worker count.
template <typename Fn>
void parallel_for(std::ptrdiff_t n, unsigned workers, Fn&& fn) {
  if (n <= 0) return;
  if (workers == 0) workers = default_workers();
  const auto chunks = static_cast<std::ptrdiff_t>(std::min<std::ptrdiff_t>(workers, n));
  if (chunks <= 1) {
    fn(std::ptrdiff_t{0}, n);
    return;
  }
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::jthread> pool;
  pool.reserve(static_cast<std::size_t>(chunks));
  for (std::ptrdiff_t c = 0; c < chunks; ++c) {
    const std::ptrdiff_t begin = n * c / chunks;
    const std::ptrdiff_t end = n * (c + 1) / chunks;
    pool.emplace_back([&, begin, end] {
      try {
        fn(begin, end);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  pool.clear();
  if (error) std::rethrow_exception(error);
}

}  // namespace bayesrank
