#pragma once

#include <functional>

#include "nrf/tensor.hpp"

namespace nrf {

// Worker count used when a call passes jobs <= 0.
void set_default_jobs(int jobs);
int default_jobs();

// Splits [0, n) into contiguous chunks, one per worker; f(begin, end) must
// only write to its own range. The first exception is rethrown.
void parallel_for(Index n, int jobs, const std::function<void(Index, Index)>& f);

}  // namespace nrf
