#pragma once

#include <cstddef>
#include <functional>

namespace spc {

// Runs fn(0..n-1) on up to `jobs` threads.  The first exception thrown by
// any call is rethrown after all workers have joined.
void parallel_for(size_t n, int jobs, const std::function<void(size_t)>& fn);

}  // namespace spc
