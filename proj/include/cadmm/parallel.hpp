#pragma once

#include <functional>
#include <thread>
#include <vector>

namespace cadmm {

/// Runs fn(0..n-1) across at most `workers` threads with a static index
/// partition. fn must not throw; call sites capture failures per index.
/// Results are index-addressed, so scheduling cannot affect outcomes.
inline void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
  if (workers <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  int w = std::min(workers, n);
  std::vector<std::thread> threads;
  threads.reserve(w);
  for (int t = 0; t < w; ++t) {
    threads.emplace_back([t, w, n, &fn] {
      for (int i = t; i < n; i += w) fn(i);
    });
  }
  for (auto& th : threads) th.join();
}

}  // namespace cadmm
