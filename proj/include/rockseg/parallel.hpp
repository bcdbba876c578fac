#pragma once

#include <cstdint>
#include <functional>

namespace rockseg {

// Process-wide worker count (1 = serial). Set once from the CLI --threads
// flag or a test; kernels read it through parallel_for.
void set_thread_count(int n);
int thread_count();

// Splits [begin, end) into one contiguous chunk per worker and runs
// fn(chunk_begin, chunk_end) on each. Chunk boundaries depend only on the
// range and worker count, and chunks never overlap, so any kernel whose
// writes are disjoint per index is deterministic for a fixed thread count.
// Kernels written against two-buffer state are deterministic for any count.
void parallel_for(std::int64_t begin, std::int64_t end,
                  const std::function<void(std::int64_t, std::int64_t)>& fn);

} // namespace rockseg
