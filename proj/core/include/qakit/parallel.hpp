// Copyright (c) 2026, qakit contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <optional>
#include <thread>
#include <vector>

namespace qakit {

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Results land in
/// slot i regardless of scheduling, so the output order is deterministic.
/// The first exception thrown by any task is rethrown after all workers join.
template <typename Result>
std::vector<Result> parallel_map(std::size_t n, std::size_t workers,
                                 const std::function<Result(std::size_t)>& fn) {
  std::vector<std::optional<Result>> slots(n);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};

  auto run = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      if (failed.load()) return;
      try {
        slots[i].emplace(fn(i));
      } catch (...) {
        bool expected = false;
        if (failed.compare_exchange_strong(expected, true)) failure = std::current_exception();
        return;
      }
    }
  };

  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    run();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run);
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<Result> out;
  out.reserve(n);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

}  // namespace qakit
