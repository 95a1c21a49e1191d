#pragma once

#include <cstddef>
#include <functional>

namespace curvesim {

// CURVESIM_WORKERS if set and positive, else the hardware thread count.
unsigned default_workers();

// Calls fn(i) for i in [0, n) on up to `workers` threads. The first exception
// thrown by any call is rethrown after all threads finish.
void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& fn);

} // namespace curvesim
