#pragma once

#include "quadrl/simd.hpp"

namespace quadrl::simd {

// Defined only in translation units built for the matching target.
const Kernels* avx2_kernels();
const Kernels* neon_kernels();

}  // namespace quadrl::simd
