#pragma once

// Fan-out of independent per-block work. Each task writes only its own slot,
// so parallel and sequential runs produce identical results. When several
// tasks throw, the exception of the lowest index is rethrown.

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace aladin {

template <class Fn>
void parallel_for(std::size_t n, bool parallel, Fn&& fn) {
  if (!parallel || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t hw = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  const std::size_t workers = std::min(n, hw);
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace aladin
