#include <cstdlib>
#include <string>

#include "quadrl/common.hpp"
#include "simd_internal.hpp"

namespace quadrl::simd {

#if !defined(QUADRL_HAVE_AVX2)
const Kernels* avx2_kernels() { return nullptr; }
#endif
#if !defined(QUADRL_HAVE_NEON)
const Kernels* neon_kernels() { return nullptr; }
#endif

bool available(Backend b) {
  switch (b) {
    case Backend::Scalar: return true;
    case Backend::Avx2:
#if defined(QUADRL_HAVE_AVX2)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Backend::Neon: return neon_kernels() != nullptr;  // baseline on aarch64
  }
  return false;
}

const Kernels& kernels_for(Backend b) {
  if (!available(b)) throw Error("SIMD backend not available: " + std::string(backend_name(b)));
  switch (b) {
    case Backend::Avx2: return *avx2_kernels();
    case Backend::Neon: return *neon_kernels();
    default: return scalar_kernels();
  }
}

namespace {
const Kernels& select() {
  if (const char* env = std::getenv("QUADRL_SIMD")) {
    const std::string want(env);
    if (want == "scalar") return scalar_kernels();
    if (want == "avx2") return kernels_for(Backend::Avx2);
    if (want == "neon") return kernels_for(Backend::Neon);
    if (want != "auto" && !want.empty()) throw ConfigError("QUADRL_SIMD must be scalar, avx2, neon or auto");
  }
  if (available(Backend::Avx2)) return *avx2_kernels();
  if (available(Backend::Neon)) return *neon_kernels();
  return scalar_kernels();
}
}  // namespace

const Kernels& kernels() {
  static const Kernels& k = select();
  return k;
}

std::string_view backend_name(Backend b) {
  switch (b) {
    case Backend::Scalar: return "scalar";
    case Backend::Avx2: return "avx2";
    case Backend::Neon: return "neon";
  }
  return "?";
}

std::vector<Backend> available_backends() {
  std::vector<Backend> out;
  for (Backend b : {Backend::Scalar, Backend::Avx2, Backend::Neon}) {
    if (available(b)) out.push_back(b);
  }
  return out;
}

}  // namespace quadrl::simd
