#pragma once
// Deterministic parallel-for: items are split into contiguous static chunks,
// one thread per chunk, and every item is computed by exactly one thread with
// the same per-item instruction order regardless of worker count. Callers may
// only write to disjoint output slots from the body; cross-item reductions
// must be done serially afterwards in index order.

#include <functional>
#include <thread>
#include <vector>

namespace ucnet {

inline void parallel_for(int count, int workers, const std::function<void(int)>& body) {
  if (count <= 0) return;
  if (workers > count) workers = count;
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::thread> threads;
  threads.reserve(size_t(workers));
  for (int t = 0; t < workers; ++t) {
    const int begin = int(int64_t(count) * t / workers);
    const int end = int(int64_t(count) * (t + 1) / workers);
    threads.emplace_back([begin, end, &body] {
      for (int i = begin; i < end; ++i) body(i);
    });
  }
  for (auto& th : threads) th.join();
}

}  // namespace ucnet
