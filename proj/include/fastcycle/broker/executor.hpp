#pragma once

#include <condition_variable>
#include <cstddef>
#include <deque>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace fastcycle {

using Task = std::function<void()>;

/// Where the broker sends callback tasks.
class Executor {
 public:
  virtual ~Executor() = default;
  virtual void submit(Task task) = 0;
  /// Runs everything already submitted, then releases worker resources.
  virtual void shutdown() = 0;
  /// True when called from inside a task run by this executor.
  virtual bool on_worker() const noexcept = 0;
};

/// Fixed-size thread pool with a single FIFO task queue.
class WorkerPool final : public Executor {
 public:
  explicit WorkerPool(std::size_t workers) {
    threads_.reserve(workers);
    for (std::size_t i = 0; i < workers; ++i) threads_.emplace_back([this] { run(); });
  }

  ~WorkerPool() override { shutdown(); }

  void submit(Task task) override {
    {
      std::lock_guard lk(mu_);
      tasks_.push_back(std::move(task));
    }
    cv_.notify_one();
  }

  void shutdown() override {
    {
      std::lock_guard lk(mu_);
      if (stopping_) return;
      stopping_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) {
      if (t.joinable()) t.join();
    }
  }

  bool on_worker() const noexcept override { return current_pool() == this; }

  std::size_t size() const noexcept { return threads_.size(); }

 private:
  static const WorkerPool*& current_pool() noexcept {
    thread_local const WorkerPool* pool = nullptr;
    return pool;
  }

  void run() {
    current_pool() = this;
    for (;;) {
      Task task;
      {
        std::unique_lock lk(mu_);
        cv_.wait(lk, [&] { return stopping_ || !tasks_.empty(); });
        if (tasks_.empty()) return;  // stopping and drained
        task = std::move(tasks_.front());
        tasks_.pop_front();
      }
      task();
    }
  }

  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Task> tasks_;
  bool stopping_ = false;
  std::vector<std::thread> threads_;
};

/// Single-stepped executor for deterministic tests: tasks run only when the
/// test calls run_one()/run_all(), on the calling thread.
class ManualExecutor final : public Executor {
 public:
  void submit(Task task) override {
    std::lock_guard lk(mu_);
    tasks_.push_back(std::move(task));
  }

  void shutdown() override { run_all(); }

  bool on_worker() const noexcept override { return running_; }

  bool run_one() {
    Task task;
    {
      std::lock_guard lk(mu_);
      if (tasks_.empty()) return false;
      task = std::move(tasks_.front());
      tasks_.pop_front();
    }
    running_ = true;
    task();
    running_ = false;
    return true;
  }

  std::size_t run_all() {
    std::size_t n = 0;
    while (run_one()) ++n;
    return n;
  }

  std::size_t pending() const {
    std::lock_guard lk(mu_);
    return tasks_.size();
  }

 private:
  mutable std::mutex mu_;
  std::deque<Task> tasks_;
  bool running_ = false;
};

}  // namespace fastcycle
