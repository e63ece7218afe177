#pragma once

#include <condition_variable>
#include <cstddef>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace fafed {

using IndexFn = std::function<void(std::size_t)>;
/// Runs fn(0..n-1), possibly concurrently, and returns once all calls finish.
using ParallelFor = std::function<void(std::size_t n, const IndexFn& fn)>;

void serial_for(std::size_t n, const IndexFn& fn);

/// Fixed set of threads that execute index ranges in lockstep with the
/// caller. Work is split into contiguous blocks, so each index is handled by
/// exactly one thread and per-index results do not depend on scheduling.
class WorkerPool {
 public:
  explicit WorkerPool(std::size_t workers);
  ~WorkerPool();

  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  std::size_t size() const { return threads_.size() + 1; }

  void parallel_for(std::size_t n, const IndexFn& fn);

  ParallelFor as_parallel_for() {
    return [this](std::size_t n, const IndexFn& fn) { parallel_for(n, fn); };
  }

 private:
  void worker_loop(std::size_t slot);
  void run_block(std::size_t slot);

  std::vector<std::thread> threads_;
  std::mutex mutex_;
  std::condition_variable work_ready_;
  std::condition_variable work_done_;
  const IndexFn* job_ = nullptr;
  std::size_t job_size_ = 0;
  std::size_t generation_ = 0;
  std::size_t pending_ = 0;
  bool stopping_ = false;
};

}  // namespace fafed
