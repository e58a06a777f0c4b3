#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace qpo {

/// Number of worker threads used by parallel_for. Defaults to the hardware
/// concurrency; set_worker_count(1) forces serial execution.
std::size_t worker_count();
void set_worker_count(std::size_t n);

/// Calls fn(i) for i in [0, n) on up to worker_count() threads. Each index is
/// visited exactly once; callers write results into per-index slots and
/// reduce afterwards in index order, so results never depend on scheduling.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const std::size_t workers = std::min(worker_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < n; i += workers) fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

/// Pairwise summation over a fixed binary tree; the result depends only on the
/// input order.
template <class T>
T tree_sum(const std::vector<T>& values, std::size_t lo, std::size_t hi, const T& zero) {
  if (hi <= lo) return zero;
  if (hi - lo == 1) return values[lo];
  const std::size_t mid = lo + (hi - lo) / 2;
  T left = tree_sum(values, lo, mid, zero);
  left += tree_sum(values, mid, hi, zero);
  return left;
}

template <class T>
T tree_sum(const std::vector<T>& values, const T& zero) {
  return tree_sum(values, 0, values.size(), zero);
}

}  // namespace qpo
