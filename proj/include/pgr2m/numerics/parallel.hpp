#pragma once

#include <cstddef>
#include <functional>

namespace pgr2m::nn {

// Worker count: PGR2M_THREADS when set, else the hardware concurrency.
std::size_t worker_count();

// Runs body(i) for i in [0, n) across worker_count() threads. Exceptions from
// workers are rethrown on the caller.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace pgr2m::nn
