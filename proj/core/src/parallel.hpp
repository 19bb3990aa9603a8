#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace qagkit::detail {

/// Calls fn(i) for i in [0, n) on at most `limit` threads. fn must not
/// throw; callers record failures per index.
template <class Fn>
void bounded_for(std::size_t n, std::size_t limit, Fn&& fn) {
  if (n == 0) return;
  limit = std::clamp<std::size_t>(limit, 1, n);
  if (limit == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> workers;
  workers.reserve(limit);
  for (std::size_t w = 0; w < limit; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  }
}

}  // namespace qagkit::detail
