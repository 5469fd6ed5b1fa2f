#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace pph {

namespace detail {
inline std::atomic<int>& thread_setting() {
  static std::atomic<int> n{0};
  return n;
}
// Set while a thread runs a parallel_for body; nested calls then run serially.
inline bool& in_worker() {
  thread_local bool flag = false;
  return flag;
}
}  // namespace detail

/// 0 means "use hardware concurrency".
inline void set_thread_count(int n) { detail::thread_setting() = std::max(0, n); }

inline int thread_count() {
  int n = detail::thread_setting();
  if (n > 0) return n;
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Runs fn(i) for i in [0, n). Each index must write only its own output slot,
/// so results do not depend on the thread count.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const auto workers = static_cast<std::size_t>(std::min<std::size_t>(thread_count(), n));
  if (workers <= 1 || detail::in_worker()) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex err_mu;
  auto body = [&] {
    detail::in_worker() = true;
    try {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
      detail::in_worker() = false;
    } catch (...) {
      detail::in_worker() = false;
      std::lock_guard<std::mutex> lock(err_mu);
      if (!err) err = std::current_exception();
      next = n;
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(body);
  body();
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

/// Chunked variant for cheap per-index bodies.
template <class Fn>
void parallel_chunks(std::size_t n, std::size_t chunk, Fn&& fn) {
  if (chunk == 0) chunk = 1;
  const std::size_t blocks = (n + chunk - 1) / chunk;
  parallel_for(blocks, [&](std::size_t b) {
    const std::size_t lo = b * chunk, hi = std::min(n, lo + chunk);
    fn(lo, hi);
  });
}

}  // namespace pph
