#pragma once

#include <cstddef>
#include <functional>

namespace snnwb {

// Worker cap for batch-level loops. Work is split into one contiguous block
// per worker, so for a given thread count results do not depend on scheduling;
// callers that reduce across items must do so over per-block slots in index
// order.
void set_worker_threads(int n);
int worker_threads();

// Runs fn(begin, end) over a fixed partition of [0, n).
void parallel_for(size_t n, const std::function<void(size_t, size_t)>& fn);

// The number of blocks parallel_for will use for n items, so callers can
// pre-allocate per-block reduction slots.
size_t parallel_chunk_count(size_t n);

// Same partition, with the block index passed along.
void parallel_for_chunks(size_t n, const std::function<void(size_t chunk, size_t begin, size_t end)>& fn);

}  // namespace snnwb
