#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace celltrain {

// Global worker cap set once by the CLI (--threads); 0 means hardware default.
inline unsigned& worker_cap() {
  static unsigned cap = 0;
  return cap;
}

inline unsigned effective_workers(std::size_t items) {
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  unsigned cap = worker_cap() == 0 ? hw : std::min(worker_cap(), hw);
  return static_cast<unsigned>(std::min<std::size_t>(cap, std::max<std::size_t>(items, 1)));
}

// Runs fn(i) for i in [0, n). Results must be written to pre-sized slots so
// that output order is independent of scheduling; fn must not touch shared
// mutable state. Exceptions are rethrown on the calling thread.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  unsigned workers = effective_workers(n);
  if (workers <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errs(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errs[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
}

}  // namespace celltrain
