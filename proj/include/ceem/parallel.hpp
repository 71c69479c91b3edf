#pragma once

#include <cstddef>
#include <exception>
#include <vector>

namespace ceem {

/// Number of worker threads used by parallel_for; 0 means the runtime default.
void set_num_threads(int threads);
int num_threads();

/// Runs body(i) for i in [0, count). Each index writes only its own output,
/// so results do not depend on the thread count. If any call throws, the
/// exception from the lowest index is rethrown after all calls finish.
template <class Body>
void parallel_for(std::ptrdiff_t count, Body&& body) {
  std::vector<std::exception_ptr> errors(static_cast<size_t>(count > 0 ? count : 0));
#if defined(CEEM_HAVE_OPENMP)
#pragma omp parallel for schedule(static) num_threads(num_threads())
#endif
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      body(i);
    } catch (...) {
      errors[static_cast<size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace ceem
