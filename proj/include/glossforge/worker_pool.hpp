#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace glossforge {

/// Runs fn(i) for i in [0, n) on at most `width` threads. Items are claimed in
/// index order; the first exception thrown by any item is rethrown after all
/// workers have joined.
template <typename F>
void parallel_for(size_t n, size_t width, F&& fn) {
  width = std::clamp<size_t>(width, 1, std::max<size_t>(n, 1));
  if (width == 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::exception_ptr first_error;
  std::mutex mu;
  {
    std::vector<std::jthread> workers;
    workers.reserve(width);
    for (size_t w = 0; w < width; ++w) {
      workers.emplace_back([&] {
        for (size_t i; (i = next.fetch_add(1)) < n;) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(mu);
            if (!first_error) first_error = std::current_exception();
          }
        }
      });
    }
  }
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace glossforge
