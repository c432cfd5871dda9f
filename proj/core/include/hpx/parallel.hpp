#pragma once

#include <cstddef>
#include <functional>

namespace hpx {

// Worker cap: set_worker_count() if called, else $HPX_THREADS, else hardware concurrency.
std::size_t worker_count();
void set_worker_count(std::size_t n);

// Runs body(i) for i in [0, n). Chunks are static, so results are
// deterministic as long as body(i) writes only to slots owned by i.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body, std::size_t min_parallel = 2);

}  // namespace hpx
