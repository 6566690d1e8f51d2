#pragma once

#include <cstddef>

#ifdef GRAZE_HAVE_OPENMP
#include <omp.h>
#endif

namespace graze::par {

inline int hardware_jobs() {
#ifdef GRAZE_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

/// Serial reference loop; the parallel path must produce identical results.
template <class F>
void for_indexed_serial(std::size_t n, F&& body) {
  for (std::size_t i = 0; i < n; ++i) body(i);
}

/// Index-parallel loop. Each body(i) owns slot i of any output, so the result
/// does not depend on the schedule or the thread count.
template <class F>
void for_indexed(std::size_t n, F&& body, int jobs = 0) {
  if (jobs <= 0) jobs = hardware_jobs();
#ifdef GRAZE_HAVE_OPENMP
  if (jobs > 1 && n > 1) {
#pragma omp parallel for schedule(dynamic) num_threads(jobs)
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
      body(static_cast<std::size_t>(i));
    }
    return;
  }
#endif
  for_indexed_serial(n, body);
}

}  // namespace graze::par
