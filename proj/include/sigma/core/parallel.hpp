#pragma once

#include <cstddef>
#include <functional>

namespace sigma {

// Logical core count, at least 1.
std::size_t default_workers();

// Calls fn(i) for every i in [0, n) on up to `workers` threads (0 means
// default_workers()). Each index runs exactly once; callers write results by
// index so output order never depends on scheduling. If any call throws, the
// exception from the lowest failing index is rethrown after all threads join.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace sigma
