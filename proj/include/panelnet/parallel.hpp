#pragma once

#include <cstdint>

namespace panelnet {

// Work is split only across independent outputs, never across a reduction,
// so results do not depend on the thread count.
void set_num_threads(int n);
int num_threads();

template <typename F>
void parallel_for(std::int64_t n, F&& body) {
#pragma omp parallel for schedule(static) if (n > 1)
  for (std::int64_t i = 0; i < n; ++i) body(i);
}

}  // namespace panelnet
