#pragma once

#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace summint {

// Runs body(0..n_tasks-1) on up to `jobs` threads. Task outputs must go to
// preallocated per-index slots so results cannot depend on scheduling.
// The first exception thrown by any task is rethrown after all join.
inline void parallel_for(int n_tasks, int jobs, const std::function<void(int)>& body) {
  if (n_tasks <= 0) return;
  if (jobs < 1) jobs = 1;
  if (jobs == 1 || n_tasks == 1) {
    for (int i = 0; i < n_tasks; ++i) body(i);
    return;
  }
  const int workers = jobs < n_tasks ? jobs : n_tasks;
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  std::mutex err_mutex;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      while (true) {
        const int i = next.fetch_add(1);
        if (i >= n_tasks) return;
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (!failed.exchange(true)) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failed) std::rethrow_exception(first_error);
}

}  // namespace summint
