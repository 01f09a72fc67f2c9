#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <vector>

#include "ntrans/rng.hpp"

namespace ntrans {

struct TallyEstimate {
  double t = 0.0;
  double mean = 0.0;
  double std_error = 0.0;
  long n_paths = 0;
};

struct SimOptions {
  std::uint64_t seed = 1;
  long n_paths = 10000;
  int n_workers = 1;
  long block_size = 1024;          // thread-partition parameter
  long population_cap = 10000000;  // branching blowup guard
};

// Runs one scoring function per path and merges block partial sums in block
// order. Each path owns an Rng derived from (seed, path index), and blocks
// are reduced in a fixed order, so the estimate depends only on (seed,
// n_paths, block_size) and never on the worker count or scheduling.
inline TallyEstimate run_paths(const SimOptions& options, double t,
                               const std::function<double(long, Rng&)>& path_value) {
  if (options.n_paths < 1) throw std::invalid_argument("run_paths: n_paths must be >= 1");
  const long n_blocks = (options.n_paths + options.block_size - 1) / options.block_size;

  struct BlockSum {
    double sum = 0.0;
    double sum_sq = 0.0;
    long n = 0;
  };
  std::vector<BlockSum> blocks(n_blocks);

  std::atomic<long> next_block{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;
  long first_error_block = -1;

  auto worker = [&]() {
    for (;;) {
      const long b = next_block.fetch_add(1);
      if (b >= n_blocks) return;
      const long begin = b * options.block_size;
      const long end = std::min(options.n_paths, begin + options.block_size);
      BlockSum acc;
      try {
        for (long p = begin; p < end; ++p) {
          Rng rng(options.seed, static_cast<std::uint64_t>(p));
          const double v = path_value(p, rng);
          acc.sum += v;
          acc.sum_sq += v * v;
          ++acc.n;
        }
      } catch (...) {
        // Keep the error from the lowest block index so failures are as
        // reproducible as results.
        std::lock_guard<std::mutex> lock(error_mutex);
        if (first_error_block < 0 || b < first_error_block) {
          first_error_block = b;
          first_error = std::current_exception();
        }
        return;
      }
      blocks[b] = acc;
    }
  };

  const int n_workers = std::max(1, options.n_workers);
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_workers);
    for (int i = 0; i < n_workers; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  double sum = 0.0, sum_sq = 0.0;
  long n = 0;
  for (const auto& b : blocks) {
    sum += b.sum;
    sum_sq += b.sum_sq;
    n += b.n;
  }
  TallyEstimate est;
  est.t = t;
  est.n_paths = n;
  est.mean = sum / static_cast<double>(n);
  if (n > 1) {
    const double var = std::max(0.0, (sum_sq - sum * sum / n) / (n - 1));
    est.std_error = std::sqrt(var / n);
  }
  return est;
}

}  // namespace ntrans
