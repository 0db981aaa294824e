#pragma once

// Work distribution over a fixed item list. Callers write results into per-item
// slots and reduce them in item order afterwards, so the thread count never
// changes a result.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace posefeat {

inline std::size_t hardware_jobs() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : n;
}

/// Calls fn(i) for i in [0, count) on up to `jobs` threads. The first exception
/// (lowest item index) is rethrown after all workers stop.
template <class Fn>
void parallel_for(std::size_t count, std::size_t jobs, Fn&& fn) {
  if (count == 0) return;
  jobs = std::max<std::size_t>(1, std::min(jobs, count));
  if (jobs == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::mutex mu;
  std::size_t error_index = count;
  std::exception_ptr error;
  const auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count || failed.load()) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (i < error_index) {
          error_index = i;
          error = std::current_exception();
        }
        failed.store(true);
      }
    }
  };
  std::vector<std::thread> threads;
  threads.reserve(jobs - 1);
  for (std::size_t t = 1; t < jobs; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

/// Fixed-size chunks of [0, count); chunk boundaries never depend on jobs.
template <class Fn>
void parallel_chunks(std::size_t count, std::size_t chunk, std::size_t jobs, Fn&& fn) {
  const std::size_t n_chunks = (count + chunk - 1) / chunk;
  parallel_for(n_chunks, jobs, [&](std::size_t c) { fn(c, c * chunk, std::min(count, (c + 1) * chunk)); });
}

}  // namespace posefeat
