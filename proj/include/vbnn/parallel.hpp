#pragma once

#include <cstddef>
#include <functional>

namespace vbnn {

/// Process-wide worker count used by parallel_for. Results of every routine
/// in the library are independent of this value.
void set_num_threads(unsigned threads);
unsigned num_threads();

/// Runs body(i) for i in [0, n) on up to num_threads() workers with static
/// contiguous chunks. body must only write to slots owned by index i.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace vbnn
