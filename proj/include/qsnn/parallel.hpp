#pragma once

#include <cstddef>
#include <functional>

namespace qsnn {

// Worker thread cap. Initialised from QSNN_THREADS (falls back to the
// hardware concurrency); strict-deterministic runs pin it to 1.
std::size_t max_threads();
void set_max_threads(std::size_t n);

// Splits [0, n) into contiguous chunks and runs fn(begin, end) on each.
// Chunks never share output elements, so callers that write disjoint ranges
// get identical results for every thread count.
void parallel_for(std::size_t n, std::size_t min_chunk,
                  const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace qsnn
