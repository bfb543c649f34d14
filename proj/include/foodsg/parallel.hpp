#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace foodsg {

inline unsigned default_workers() { return std::max(1u, std::thread::hardware_concurrency()); }

// Evaluates fn(i) for i in [0, n) on up to `workers` threads and returns the
// results in index order, so the output never depends on scheduling. The
// first exception thrown by any task is rethrown on the caller.
template <typename Fn>
auto parallel_map(std::size_t n, Fn fn, unsigned workers = default_workers()) {
  using R = decltype(fn(std::size_t{0}));
  std::vector<R> out(n);
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            out[i] = fn(i);
          } catch (...) {
            std::lock_guard lock(failure_mu);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace foodsg
