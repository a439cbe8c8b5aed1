#include "nrf/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace nrf {
namespace {
std::atomic<int> g_jobs{1};
}

void set_default_jobs(int jobs) { g_jobs = std::max(1, jobs); }
int default_jobs() { return g_jobs; }

void parallel_for(Index n, int jobs, const std::function<void(Index, Index)>& f) {
  if (n <= 0) return;
  if (jobs <= 0) jobs = default_jobs();
  const Index workers = std::min<Index>(jobs, n);
  if (workers <= 1) {
    f(0, n);
    return;
  }
  std::exception_ptr err;
  std::mutex mu;
  std::vector<std::thread> pool;
  const Index chunk = (n + workers - 1) / workers;
  for (Index w = 0; w < workers; ++w) {
    const Index b = w * chunk, e = std::min(n, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&, b, e] {
      try {
        f(b, e);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!err) err = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace nrf
