// Internal: tiny fork-join helper for subproblem rounds. Each worker owns a
// contiguous index block, so writes land in disjoint slots and the caller
// can reduce in index order for determinism.
#pragma once

#include <algorithm>
#include <functional>
#include <thread>
#include <vector>

namespace opfdd::detail {

inline int resolve_workers(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(i) for i in [0, n); strictly serial when workers <= 1. The first
// exception thrown by any worker is rethrown on the calling thread.
inline void parallel_for(int n, int workers,
                         const std::function<void(int)>& fn) {
  if (n <= 0) return;
  workers = std::min(workers, n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::vector<std::exception_ptr> errors(workers);
  const int chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const int lo = w * chunk;
    const int hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn, err = &errors[w]] {
      try {
        for (int i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        *err = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& err : errors)
    if (err) std::rethrow_exception(err);
}

}  // namespace opfdd::detail
