#pragma once

#include <cstddef>
#include <functional>

namespace denois {

/// Worker count used for internal parallel loops. Reads DENOIS_THREADS once
/// per call; falls back to the hardware concurrency.
int thread_count();

/// Runs fn(begin, end) over [0, n) split into fixed-size blocks. The block
/// layout depends only on n and block_size, never on the thread count, so
/// any per-block reduction merged in block order is reproducible.
void parallel_for(std::size_t n, std::size_t block_size,
                  const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace denois
