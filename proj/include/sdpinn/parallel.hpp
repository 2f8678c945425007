#pragma once

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace sdpinn {

/// Worker cap from SDPINN_THREADS (default: hardware concurrency, minimum 1).
inline int thread_budget() {
  if (const char* env = std::getenv("SDPINN_THREADS")) {
    int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(task) for task in [0, tasks). Results must be written to per-task
/// slots; callers reduce them in task order so the outcome does not depend on
/// the worker count.
inline void for_each_task(int tasks, const std::function<void(int)>& fn, int workers = 0) {
  if (workers <= 0) workers = thread_budget();
  workers = std::min(workers, tasks);
  if (workers <= 1) {
    for (int i = 0; i < tasks; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::exception_ptr failure;
  std::mutex failure_mutex;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (int i = w; i < tasks; i += workers) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace sdpinn
