#pragma once

#include <functional>

namespace hairgbuf {

/// Worker count used by parallel_for. Defaults to 1; values < 1 are clamped.
void set_thread_count(int threads);
int thread_count();

/// Runs body(i) for i in [begin, end) split into contiguous chunks, one per
/// worker. Callers must only write state owned by index i, which keeps results
/// independent of the worker count.
void parallel_for(int begin, int end, const std::function<void(int)>& body);

}  // namespace hairgbuf
