#include "ntkdfl/thread_pool.hpp"

#include <exception>

namespace ntkdfl {

ThreadPool::ThreadPool(std::size_t workers) {
  for (std::size_t i = 1; i < workers; ++i) threads_.emplace_back([this] { worker_loop(); });
}

ThreadPool::~ThreadPool() {
  {
    std::lock_guard lock(mu_);
    stop_ = true;
  }
  wake_.notify_all();
  for (auto& t : threads_) t.join();
}

void ThreadPool::drain() {
  for (;;) {
    std::size_t i;
    {
      std::lock_guard lock(mu_);
      if (next_ >= total_) return;
      i = next_++;
    }
    try {
      (*body_)(i);
    } catch (...) {
      std::lock_guard lock(mu_);
      errors_[i] = std::current_exception();
    }
    {
      std::lock_guard lock(mu_);
      if (++finished_ == total_) done_.notify_all();
    }
  }
}

void ThreadPool::worker_loop() {
  std::size_t seen = 0;
  for (;;) {
    {
      std::unique_lock lock(mu_);
      wake_.wait(lock, [&] { return stop_ || generation_ != seen; });
      if (stop_) return;
      seen = generation_;
    }
    drain();
  }
}

void ThreadPool::parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  if (n == 0) return;
  {
    std::lock_guard lock(mu_);
    body_ = &body;
    next_ = 0;
    total_ = n;
    finished_ = 0;
    errors_.assign(n, nullptr);
    ++generation_;
  }
  wake_.notify_all();
  drain();
  {
    std::unique_lock lock(mu_);
    done_.wait(lock, [&] { return finished_ == total_; });
    body_ = nullptr;
  }
  for (auto& e : errors_)
    if (e) std::rethrow_exception(e);
}

}  // namespace ntkdfl
