#include "upsam/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace upsam {

int worker_count() {
  static const int n = [] {
    if (const char* env = std::getenv("UPSAM_THREADS")) {
      const int v = std::atoi(env);
      if (v >= 1) return v;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw ? static_cast<int>(hw) : 1;
  }();
  return n;
}

void parallel_for(std::int64_t n,
                  const std::function<void(std::int64_t, std::int64_t)>& fn) {
  if (n <= 0) return;
  constexpr std::int64_t kChunk = 4096;
  const std::int64_t chunks = (n + kChunk - 1) / kChunk;
  const int workers = worker_count();
  if (workers <= 1 || chunks == 1) {
    for (std::int64_t c = 0; c < chunks; ++c)
      fn(c * kChunk, std::min(n, (c + 1) * kChunk));
    return;
  }

  std::atomic<std::int64_t> next{0};
  auto drain = [&] {
    for (;;) {
      const std::int64_t c = next.fetch_add(1);
      if (c >= chunks) return;
      fn(c * kChunk, std::min(n, (c + 1) * kChunk));
    }
  };

  const int spawn = static_cast<int>(
      std::min<std::int64_t>(workers, chunks) - 1);
  std::vector<std::thread> pool;
  pool.reserve(spawn);
  for (int t = 0; t < spawn; ++t) pool.emplace_back(drain);
  drain();
  for (auto& th : pool) th.join();
}

}  // namespace upsam
