#pragma once
// Static-partition parallel loops. Work is split into fixed chunks so that
// every reduction sees the same summation order regardless of thread count.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace mrs {

namespace detail {
inline std::atomic<int>& thread_cap() {
  static std::atomic<int> cap{0};
  return cap;
}
// set inside workers so that nested loops run serially
inline bool& in_worker() {
  thread_local bool flag = false;
  return flag;
}
}  // namespace detail

/// Caps worker threads; 0 means hardware concurrency.
inline void set_threads(int n) { detail::thread_cap() = std::max(0, n); }

inline int threads() {
  int n = detail::thread_cap();
  if (n > 0) return n;
  return std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
}

/// Runs f(i) for i in [0, n) on up to threads() workers. Exceptions are
/// rethrown on the caller (first one wins).
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& f) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads()), n);
  if (workers <= 1 || detail::in_worker()) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex m;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      detail::in_worker() = true;
      for (std::size_t i; (i = next++) < n;) {
        try {
          f(i);
        } catch (...) {
          std::lock_guard<std::mutex> lk(m);
          if (!err) err = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

/// Splits [0, n) into fixed-size blocks and runs f(begin, end) per block.
inline void parallel_blocks(std::size_t n, std::size_t block, const std::function<void(std::size_t, std::size_t)>& f) {
  if (block == 0) block = 1;
  const std::size_t nb = (n + block - 1) / block;
  parallel_for(nb, [&](std::size_t b) { f(b * block, std::min(n, (b + 1) * block)); });
}

/// Deterministic pairwise sum.
inline double pairwise_sum(const double* v, std::size_t n) {
  if (n <= 16) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += v[i];
    return s;
  }
  const std::size_t h = n / 2;
  return pairwise_sum(v, h) + pairwise_sum(v + h, n - h);
}

inline double pairwise_sum(const std::vector<double>& v) { return pairwise_sum(v.data(), v.size()); }

}  // namespace mrs
