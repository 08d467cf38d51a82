#include "nhmc/parallel.hpp"

#include <atomic>

namespace nhmc {
namespace {
std::atomic<std::size_t> g_workers{1};
}

void set_worker_count(std::size_t workers) {
  if (workers == 0) workers = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  g_workers.store(workers, std::memory_order_relaxed);
}

std::size_t worker_count() { return g_workers.load(std::memory_order_relaxed); }

}  // namespace nhmc
