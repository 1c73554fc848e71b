#pragma once

#include <cstddef>
#include <functional>

namespace supmae::diff {

// Worker cap for kernels. Defaults to 1; the CLI reads SUPMAE_THREADS.
void set_num_threads(std::size_t n);
std::size_t num_threads();

// Reads SUPMAE_THREADS (absent or invalid -> 1) and applies it.
std::size_t configure_threads_from_env();

// Runs fn(begin, end) over disjoint chunks of [0, n). Each output index is
// owned by exactly one chunk, so results never depend on the worker count.
void parallel_for(std::size_t n, std::size_t work_per_item,
                  const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace supmae::diff
