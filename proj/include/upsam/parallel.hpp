#pragma once

#include <cstdint>
#include <functional>

namespace upsam {

// Number of worker threads used by parallel_for.  Reads the UPSAM_THREADS
// environment variable once (clamped to >= 1); falls back to
// std::thread::hardware_concurrency().
int worker_count();

// Runs fn(begin, end) over fixed-size chunks of [0, n).  Chunk boundaries
// depend only on n, never on the thread count, so per-chunk partial results
// (and any reduction done in chunk order afterwards) are bit-reproducible
// whether the loop runs on 1 thread or 64.
void parallel_for(std::int64_t n,
                  const std::function<void(std::int64_t, std::int64_t)>& fn);

}  // namespace upsam
