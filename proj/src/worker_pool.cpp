#include "fafed/worker_pool.hpp"

#include <algorithm>
#include <exception>

namespace fafed {

void serial_for(std::size_t n, const IndexFn& fn) {
  for (std::size_t i = 0; i < n; ++i) fn(i);
}

WorkerPool::WorkerPool(std::size_t workers) {
  const std::size_t extra = workers > 1 ? workers - 1 : 0;
  threads_.reserve(extra);
  for (std::size_t s = 0; s < extra; ++s)
    threads_.emplace_back([this, s] { worker_loop(s + 1); });
}

WorkerPool::~WorkerPool() {
  {
    std::lock_guard lock(mutex_);
    stopping_ = true;
  }
  work_ready_.notify_all();
  for (auto& t : threads_) t.join();
}

void WorkerPool::run_block(std::size_t slot) {
  const std::size_t slots = size();
  const std::size_t begin = job_size_ * slot / slots;
  const std::size_t end = job_size_ * (slot + 1) / slots;
  for (std::size_t i = begin; i < end; ++i) (*job_)(i);
}

void WorkerPool::worker_loop(std::size_t slot) {
  std::size_t seen = 0;
  for (;;) {
    {
      std::unique_lock lock(mutex_);
      work_ready_.wait(lock, [&] { return stopping_ || generation_ != seen; });
      if (stopping_) return;
      seen = generation_;
    }
    run_block(slot);
    {
      std::lock_guard lock(mutex_);
      if (--pending_ == 0) work_done_.notify_one();
    }
  }
}

void WorkerPool::parallel_for(std::size_t n, const IndexFn& fn) {
  if (threads_.empty() || n < 2) {
    serial_for(n, fn);
    return;
  }
  // Exceptions from worker blocks are captured and rethrown on the caller.
  std::exception_ptr error;
  std::mutex error_mutex;
  const IndexFn guarded = [&](std::size_t i) {
    try {
      fn(i);
    } catch (...) {
      std::lock_guard lock(error_mutex);
      if (!error) error = std::current_exception();
    }
  };
  {
    std::lock_guard lock(mutex_);
    job_ = &guarded;
    job_size_ = n;
    pending_ = threads_.size();
    ++generation_;
  }
  work_ready_.notify_all();
  run_block(0);
  {
    std::unique_lock lock(mutex_);
    work_done_.wait(lock, [&] { return pending_ == 0; });
    job_ = nullptr;
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace fafed
