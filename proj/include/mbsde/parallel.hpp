#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace mbsde {

/// Number of workers used when a caller passes 0.
inline std::size_t default_workers() {
  const auto hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<std::size_t>(hc);
}

/// Splits [0, n) into contiguous chunks and runs body(begin, end) on each.
/// Results must be written by index; chunking never changes what is computed
/// for a given index, so output is independent of the worker count.
inline void parallel_for(std::size_t n, std::size_t workers,
                         const std::function<void(std::size_t, std::size_t)>& body) {
  if (workers == 0) workers = default_workers();
  workers = std::min(workers, std::max<std::size_t>(n, 1));
  if (workers <= 1) {
    body(0, n);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&, w, begin, end] {
      try {
        body(begin, end);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace mbsde
