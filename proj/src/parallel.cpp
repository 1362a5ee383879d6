#include "acnet/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace acnet {

int worker_threads() {
  static const int n = [] {
    if (const char* env = std::getenv("ACNET_THREADS")) {
      const int v = std::atoi(env);
      if (v >= 1) return v;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
  }();
  return n;
}

void parallel_for(std::int64_t begin, std::int64_t end,
                  void (*fn)(std::int64_t, void*), void* ctx) {
  if (end <= begin) return;
  const int nt = worker_threads();
#ifdef _OPENMP
  if (nt > 1 && end - begin > 1) {
#pragma omp parallel for num_threads(nt) schedule(static)
    for (std::int64_t i = begin; i < end; ++i) fn(i, ctx);
    return;
  }
#endif
  (void)nt;
  for (std::int64_t i = begin; i < end; ++i) fn(i, ctx);
}

}  // namespace acnet
