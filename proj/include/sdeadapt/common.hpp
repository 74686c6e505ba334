#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace sdeadapt {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Raised when a simulated state stops being finite. Divergence is an
/// expected observable for the explicit Euler–Maruyama baseline, so callers
/// catch this and count it rather than abort.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::size_t step_index, double time)
      : std::runtime_error("non-finite state at step " + std::to_string(step_index) +
                           " (t=" + std::to_string(time) + ")"),
        step_index_(step_index),
        time_(time) {}

  std::size_t step_index() const noexcept { return step_index_; }
  double time() const noexcept { return time_; }

 private:
  std::size_t step_index_;
  double time_;
};

/// Raised by studies when no realisation finished, so there is nothing to
/// report.
class AllPathsDivergedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Number of worker threads to use when the caller asked for "default".
inline int default_workers() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<int>(n);
}

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Each index is
/// visited exactly once; results must be written to per-index slots so the
/// outcome never depends on scheduling. The first exception thrown by any
/// task is rethrown on the calling thread.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  if (workers <= 0) workers = default_workers();
  const std::size_t threads = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(n);
      }
    }
  };
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace sdeadapt
