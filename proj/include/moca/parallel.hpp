#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace moca {

inline constexpr const char* kThreadsEnv = "MOCA_NUM_THREADS";

// Worker count from MOCA_NUM_THREADS, defaulting to 1.
inline std::size_t thread_count() {
  if (const char* s = std::getenv(kThreadsEnv)) {
    try {
      const long n = std::stol(s);
      if (n >= 1) return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
    }
  }
  return 1;
}

// Runs f(i) for i in [0, n). Each index must write only its own output slot,
// which keeps results independent of the thread count. The first exception
// is rethrown after all workers stop.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& f, std::size_t threads = thread_count()) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          f(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!err) err = std::current_exception();
          next = n;
        }
      }
    });
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace moca
