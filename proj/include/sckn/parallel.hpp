#pragma once

#include <functional>

namespace sckn {

// Global cap on worker threads (CLI --threads). 0 means hardware concurrency.
void set_max_threads(int n);
int max_threads();

// Runs fn(i) for i in [0, n). Work is split into contiguous chunks, one per
// worker. Callers that reduce results must do so in index order afterwards so
// output does not depend on the thread count.
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace sckn
