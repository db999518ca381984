#include "lmc/threading.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace lmc {

namespace {
int g_threads = [] {
  if (const char* env = std::getenv("LMCLAB_THREADS")) {
    int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return 1;
}();
}  // namespace

int global_threads() { return g_threads; }

void set_global_threads(int n) { g_threads = std::max(1, n); }

void parallel_for(int n, const std::function<void(int)>& fn, int threads) {
  if (threads <= 0) threads = g_threads;
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        int i = next.fetch_add(1);
        if (i >= n) return;
        fn(i);
      }
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace lmc
