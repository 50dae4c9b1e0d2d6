#pragma once

#include <cstdint>
#include <random>

#include "spc/tensor.hpp"

namespace spc {

using Rng = std::mt19937_64;

// Independent stream derived from a root seed; used to give every worker,
// patch and sampling round its own generator so results do not depend on
// the number of threads.
Rng make_rng(uint64_t root, uint64_t stream = 0);

// Uniform integer in [lo, hi].
int uniform_int(Rng& rng, int lo, int hi);

// rows x cols standard normal draws.
Mat normal_matrix(Rng& rng, size_t rows, size_t cols);

}  // namespace spc
