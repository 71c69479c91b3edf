#include "ceem/parallel.hpp"

#include <atomic>
#include <thread>

namespace ceem {

namespace {
std::atomic<int> g_threads{0};
}

void set_num_threads(int threads) { g_threads = threads < 0 ? 0 : threads; }

int num_threads() {
  const int t = g_threads.load();
  if (t > 0) return t;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

}  // namespace ceem
