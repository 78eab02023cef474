#pragma once

#include <cstddef>
#include <functional>

namespace d2tpt {

// Upper bound on worker threads for intra-sample work. Reads D2TPT_THREADS
// once; falls back to std::thread::hardware_concurrency().
std::size_t thread_cap();

// Runs fn(begin, end) over contiguous chunks of [0, n). Chunks are disjoint,
// so callers that write only to their own rows get results independent of
// the thread count. Runs inline when the work is small or the cap is 1.
void parallel_rows(std::size_t n, std::size_t cost_per_row,
                   const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace d2tpt
