#pragma once

#include <cstddef>
#include <functional>

namespace sda {

/// Run fn(i) for every i in [0, n) on up to `workers` threads (the caller's
/// thread included). Work items are claimed dynamically, so callers must write
/// results into per-index slots and reduce them in index order themselves.
/// If any item throws, the exception of the lowest failing index is rethrown
/// after all workers have stopped.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

/// Hardware threads, at least 1.
int hardware_workers();

}  // namespace sda
