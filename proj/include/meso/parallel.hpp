#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace meso {

namespace detail {
inline std::atomic<int>& worker_override() {
  static std::atomic<int> value{0};
  return value;
}
}  // namespace detail

/// Caps the worker pool; 0 restores the default.
inline void set_worker_count(int workers) { detail::worker_override() = workers < 0 ? 0 : workers; }

/// Worker count: explicit override, else MESO_RMT_THREADS, else the hardware concurrency.
inline int worker_count() {
  if (const int w = detail::worker_override(); w > 0) return w;
  if (const char* env = std::getenv("MESO_RMT_THREADS")) {
    const int w = std::atoi(env);
    if (w > 0) return w;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Calls fn(i) for i in [0, count) on up to worker_count() threads. Results must be written
/// to per-index slots, so the outcome does not depend on scheduling. The first exception
/// thrown by any task is rethrown after all workers finish.
template <class Fn>
void parallel_for(int count, Fn&& fn, int workers = 0) {
  if (count <= 0) return;
  if (workers <= 0) workers = worker_count();
  workers = std::min(workers, count);
  if (workers == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto body = [&] {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        next = count;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers - 1));
  for (int w = 1; w < workers; ++w) pool.emplace_back(body);
  body();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace meso
