#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace dptr {

// Fixed-size pool for per-sample data parallelism. The calling thread joins
// the workers, so a pool of size 1 runs everything inline. Results must be
// written to per-task slots; any floating point reduction over tasks has to
// happen afterwards in task order so that the outcome does not depend on
// scheduling (see the train loops in pipeline.cpp).
class ThreadPool {
 public:
  explicit ThreadPool(int threads) {
    const int workers = threads > 1 ? threads - 1 : 0;
    for (int i = 0; i < workers; ++i) {
      workers_.emplace_back([this] { worker_loop(); });
    }
  }

  ThreadPool(const ThreadPool&) = delete;
  ThreadPool& operator=(const ThreadPool&) = delete;

  ~ThreadPool() {
    {
      std::lock_guard lock(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& w : workers_) w.join();
  }

  int size() const { return static_cast<int>(workers_.size()) + 1; }

  // Runs task(i) for i in [0, n); blocks until every task has finished and
  // all workers have left the batch.
  void run_indexed(int n, const std::function<void(int)>& task) {
    if (n <= 0) return;
    if (workers_.empty()) {
      for (int i = 0; i < n; ++i) task(i);
      return;
    }
    {
      std::lock_guard lock(mu_);
      task_ = &task;
      total_ = n;
      next_.store(0);
      pending_.store(n);
      ++generation_;
    }
    cv_.notify_all();
    drain(&task, n);
    std::unique_lock lock(mu_);
    done_cv_.wait(lock, [this] { return pending_.load() == 0 && draining_ == 0; });
    task_ = nullptr;
  }

 private:
  void drain(const std::function<void(int)>* task, int total) {
    while (true) {
      const int i = next_.fetch_add(1);
      if (i >= total) break;
      (*task)(i);
      if (pending_.fetch_sub(1) == 1) {
        std::lock_guard lock(mu_);
        done_cv_.notify_all();
      }
    }
  }

  void worker_loop() {
    std::uint64_t seen = 0;
    while (true) {
      const std::function<void(int)>* task = nullptr;
      int total = 0;
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return stop_ || (task_ != nullptr && generation_ != seen); });
        if (stop_) return;
        seen = generation_;
        task = task_;
        total = total_;
        ++draining_;
      }
      drain(task, total);
      {
        std::lock_guard lock(mu_);
        --draining_;
        if (draining_ == 0) done_cv_.notify_all();
      }
    }
  }

  std::vector<std::thread> workers_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable done_cv_;
  const std::function<void(int)>* task_ = nullptr;  // guarded by mu_
  int total_ = 0;                                   // guarded by mu_
  int draining_ = 0;                                // guarded by mu_
  std::uint64_t generation_ = 0;                    // guarded by mu_
  bool stop_ = false;                               // guarded by mu_
  std::atomic<int> next_{0};
  std::atomic<int> pending_{0};
};

inline int default_thread_count() {
  const unsigned hw = std::thread::hardware_concurrency();
  return static_cast<int>(hw == 0 ? 1 : (hw > 8 ? 8 : hw));
}

}  // namespace dptr
