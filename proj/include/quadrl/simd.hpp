#pragma once

// Elementwise and reduction kernels used by the network and optimizer inner
// loops. Each backend implements the same table; the scalar one is the
// reference the others are tested against.

#include <cstddef>
#include <string_view>
#include <vector>

namespace quadrl::simd {

enum class Backend { Scalar, Avx2, Neon };

struct AdamCoeffs {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double bias1 = 1.0;  // 1 - beta1^t
  double bias2 = 1.0;  // 1 - beta2^t
};

struct Kernels {
  Backend backend;
  double (*dot)(const double* a, const double* b, std::size_t n);
  /// y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  /// dx = dy * (1 - y^2), the tanh derivative expressed through its output.
  void (*tanh_backward)(const double* dy, const double* y, double* dx, std::size_t n);
  /// out = clamp((x - mean) * inv_std, -clip, clip)
  void (*normalize_clip)(const double* x, const double* mean, const double* inv_std, double clip, double* out,
                         std::size_t n);
  void (*adam_update)(double* param, double* m, double* v, const double* grad, std::size_t n,
                      const AdamCoeffs& c);
};

const Kernels& scalar_kernels();
bool available(Backend b);
/// Table for a specific backend; throws quadrl::Error if unavailable here.
const Kernels& kernels_for(Backend b);

/// Process-wide table: the best available backend, unless the QUADRL_SIMD
/// environment variable (scalar|avx2|neon) selects another one.
const Kernels& kernels();

std::string_view backend_name(Backend b);
std::vector<Backend> available_backends();

}  // namespace quadrl::simd
