#ifndef HDGMM_PARALLEL_HPP
#define HDGMM_PARALLEL_HPP

#include <Eigen/Core>
#include <functional>

namespace hdgmm {

// Resolve a requested worker count: 0 means hardware concurrency.
int resolve_threads(int requested);

// Run fn(begin, end) over a static partition of [0, n) into contiguous
// ranges, one per worker. Every index is owned by exactly one worker, so
// results written per-index are identical for any thread count. Exceptions
// thrown by workers are rethrown on the calling thread (first one wins).
void parallel_chunks(Eigen::Index n, int threads,
                     const std::function<void(Eigen::Index, Eigen::Index)>& fn);

} // namespace hdgmm

#endif
