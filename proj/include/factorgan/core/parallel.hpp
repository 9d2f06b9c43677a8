#pragma once

#include <cstddef>
#include <functional>

namespace fgan {

// Worker count: FACTORGAN_THREADS if set, else hardware concurrency.
int thread_count();

// Applies fn(i) for i in [0, n). Work is split into contiguous blocks so
// results written to preassigned slots are identical for any worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace fgan
