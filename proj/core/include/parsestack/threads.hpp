#pragma once

#include <cstdint>
#include <functional>

namespace pstk {

// Global worker count for the optional data-parallel mode inside kernels.
// 1 (the default) runs everything inline on the calling thread.
void set_num_threads(int n);
int num_threads();

// Splits [begin,end) into contiguous chunks, one per worker. Workers write
// disjoint ranges, so results are identical for any thread count.
void parallel_for(int64_t begin, int64_t end,
                  const std::function<void(int64_t, int64_t)>& range_fn);

}  // namespace pstk
