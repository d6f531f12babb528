#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <mutex>
#include <span>
#include <thread>
#include <vector>

namespace refjac {

// Neumaier compensated sum.
class CompensatedSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v)) {
      comp_ += (sum_ - t) + v;
    } else {
      comp_ += (v - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

struct SampleStats {
  double mean = 0.0;
  double std_error = 0.0;
  double std_dev = 0.0;
  std::size_t count = 0;
};

// Two-pass mean and standard error over per-path samples, reduced in path
// order so the result does not depend on how the samples were produced.
inline SampleStats sample_stats(std::span<const double> values) {
  SampleStats s;
  s.count = values.size();
  if (values.empty()) return s;
  CompensatedSum sum;
  for (double v : values) sum.add(v);
  s.mean = sum.value() / static_cast<double>(values.size());
  if (values.size() > 1) {
    CompensatedSum sq;
    for (double v : values) sq.add((v - s.mean) * (v - s.mean));
    s.std_dev = std::sqrt(sq.value() / static_cast<double>(values.size() - 1));
    s.std_error = s.std_dev / std::sqrt(static_cast<double>(values.size()));
  }
  return s;
}

// Runs fn(path_index) for every path in [0, paths). Paths are handed out in
// fixed blocks; each path is simulated from its own counter-based stream, so
// the worker count only changes scheduling, never results.
template <class Fn>
void for_each_path(std::uint64_t paths, int workers, Fn&& fn) {
  constexpr std::uint64_t kBlock = 64;
  const std::uint64_t blocks = (paths + kBlock - 1) / kBlock;
  std::atomic<std::uint64_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::atomic<bool> failed{false};

  auto work = [&] {
    for (;;) {
      const std::uint64_t b = next.fetch_add(1);
      if (b >= blocks || failed.load()) return;
      const std::uint64_t end = std::min(paths, (b + 1) * kBlock);
      try {
        for (std::uint64_t p = b * kBlock; p < end; ++p) fn(p);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        failed = true;
        return;
      }
    }
  };

  const int n = std::max(1, workers);
  if (n == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace refjac
