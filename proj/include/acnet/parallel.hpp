#pragma once

#include <cstdint>

namespace acnet {

// Worker count for primitive-level parallelism. Bounded by the
// ACNET_THREADS environment variable (read once at first use).
int worker_threads();

// Runs fn(i) for i in [begin, end). Each index is processed by exactly one
// worker and every per-index reduction stays sequential, so results are
// deterministic for any thread count.
void parallel_for(std::int64_t begin, std::int64_t end,
                  void (*fn)(std::int64_t, void*), void* ctx);

template <typename F>
void parallel_for(std::int64_t begin, std::int64_t end, F&& fn) {
  auto thunk = [](std::int64_t i, void* ctx) { (*static_cast<F*>(ctx))(i); };
  parallel_for(begin, end, thunk, &fn);
}

}  // namespace acnet
