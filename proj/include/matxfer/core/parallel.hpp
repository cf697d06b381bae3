#pragma once

#include <cstddef>
#include <functional>

namespace matxfer {

// Worker count: MATXFER_THREADS if set (>= 1), otherwise hardware concurrency.
int thread_count();

// Runs body(i) for i in [0, n). Work is split into contiguous chunks; every
// index writes only its own outputs, so results do not depend on the
// thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace matxfer
