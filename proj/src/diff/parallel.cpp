#include "supmae/diff/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace supmae::diff {
namespace {

std::atomic<std::size_t> g_threads{1};

// Below this many scalar operations a kernel stays on the calling thread.
constexpr std::size_t kMinParallelWork = 1u << 16;

}  // namespace

void set_num_threads(std::size_t n) { g_threads.store(std::max<std::size_t>(1, n)); }

std::size_t num_threads() { return g_threads.load(); }

std::size_t configure_threads_from_env() {
  std::size_t n = 1;
  if (const char* env = std::getenv("SUPMAE_THREADS")) {
    try {
      long v = std::stol(env);
      if (v > 0) n = static_cast<std::size_t>(v);
    } catch (...) {
      n = 1;
    }
  }
  set_num_threads(n);
  return n;
}

void parallel_for(std::size_t n, std::size_t work_per_item,
                  const std::function<void(std::size_t, std::size_t)>& fn) {
  const std::size_t workers = std::min(num_threads(), n);
  if (workers <= 1 || n * work_per_item < kMinParallelWork) {
    fn(0, n);
    return;
  }
  const std::size_t chunk = (n + workers - 1) / workers;
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) {
    const std::size_t b = w * chunk;
    const std::size_t e = std::min(n, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&fn, b, e] { fn(b, e); });
  }
  fn(0, std::min(n, chunk));
}

}  // namespace supmae::diff
