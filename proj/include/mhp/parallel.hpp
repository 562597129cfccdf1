#pragma once

#include <cstddef>
#include <functional>

namespace mhp {

/// Worker count: MHP_THREADS if set and positive, else hardware concurrency.
std::size_t worker_count();

/// Runs fn(0..n-1) on up to `threads` workers (0 = worker_count()). Each
/// index runs exactly once; the first exception is rethrown after all
/// workers stop.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, std::size_t threads = 0);

}  // namespace mhp
