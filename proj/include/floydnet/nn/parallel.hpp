#pragma once

#include <cstddef>
#include <functional>

namespace floydnet::nn {

// Upper bound on worker threads used by kernels. 1 (the default) runs every
// loop on the calling thread, which keeps results bitwise reproducible.
void set_max_threads(std::size_t n);
std::size_t max_threads();

// Runs body(i) for i in [0, count). Iterations must write disjoint outputs.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace floydnet::nn
