#pragma once

#include <cstddef>
#include <exception>
#include <mutex>

namespace labelaudit {

// Every parallel kernel also runs serially; tests compare the two paths.
enum class Execution { kSerial, kParallel };

// Runs body(i) for i in [0, n). Iterations must be independent. The first
// exception thrown by any iteration is rethrown on the calling thread.
template <typename Body>
void parallel_for(std::size_t n, Execution execution, Body&& body) {
  if (execution == Execution::kSerial || n < 2) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
#ifdef LABELAUDIT_HAVE_OPENMP
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic, 16)
  for (long long i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      std::lock_guard<std::mutex> lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
#else
  for (std::size_t i = 0; i < n; ++i) body(i);
#endif
}

int max_threads();

}  // namespace labelaudit
