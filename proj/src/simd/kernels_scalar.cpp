#include <algorithm>
#include <cmath>

#include "simd_internal.hpp"

namespace quadrl::simd {
namespace {

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void tanh_backward(const double* dy, const double* y, double* dx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dx[i] = dy[i] * (1.0 - y[i] * y[i]);
}

void normalize_clip(const double* x, const double* mean, const double* inv_std, double clip, double* out,
                    std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::clamp((x[i] - mean[i]) * inv_std[i], -clip, clip);
}

void adam_update(double* p, double* m, double* v, const double* g, std::size_t n, const AdamCoeffs& c) {
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
    p[i] -= c.lr * (m[i] / c.bias1) / (std::sqrt(v[i] / c.bias2) + c.eps);
  }
}

}  // namespace

const Kernels& scalar_kernels() {
  static const Kernels k{Backend::Scalar, dot, axpy, tanh_backward, normalize_clip, adam_update};
  return k;
}

}  // namespace quadrl::simd
