// Copyright Contributors to the apfield Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <functional>
#include <stdexcept>
#include <thread>
#include <vector>

namespace apf {

/// Runs fn(i) for i in [begin, end) on up to `threads` workers over contiguous
/// chunks. Callers must only use this with disjoint writes per index, so the
/// result is bitwise independent of the thread count. Reductions and gradient
/// accumulation stay serial by contract.
inline void parallel_for(int begin, int end, int threads,
                         const std::function<void(int)>& fn) {
  if (end <= begin) return;
  const int n = end - begin;
  const int workers = std::max(1, std::min(threads, n));
  if (workers == 1) {
    for (int i = begin; i < end; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const int chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const int lo = begin + w * chunk;
    const int hi = std::min(lo + chunk, end);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (int i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace apf
