#include <arm_neon.h>

#include <algorithm>
#include <cmath>

#include "simd_internal.hpp"

namespace quadrl::simd {
namespace {

double dot(const double* a, const double* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
  }
  double s = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void tanh_backward(const double* dy, const double* y, double* dx, std::size_t n) {
  const float64x2_t one = vdupq_n_f64(1.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t vy = vld1q_f64(y + i);
    vst1q_f64(dx + i, vmulq_f64(vld1q_f64(dy + i), vfmsq_f64(one, vy, vy)));
  }
  for (; i < n; ++i) dx[i] = dy[i] * (1.0 - y[i] * y[i]);
}

void normalize_clip(const double* x, const double* mean, const double* inv_std, double clip, double* out,
                    std::size_t n) {
  const float64x2_t hi = vdupq_n_f64(clip);
  const float64x2_t lo = vdupq_n_f64(-clip);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t z = vmulq_f64(vsubq_f64(vld1q_f64(x + i), vld1q_f64(mean + i)), vld1q_f64(inv_std + i));
    vst1q_f64(out + i, vminq_f64(vmaxq_f64(z, lo), hi));
  }
  for (; i < n; ++i) out[i] = std::clamp((x[i] - mean[i]) * inv_std[i], -clip, clip);
}

void adam_update(double* p, double* m, double* v, const double* g, std::size_t n, const AdamCoeffs& c) {
  const float64x2_t b1 = vdupq_n_f64(c.beta1);
  const float64x2_t b2 = vdupq_n_f64(c.beta2);
  const float64x2_t ob1 = vdupq_n_f64(1.0 - c.beta1);
  const float64x2_t ob2 = vdupq_n_f64(1.0 - c.beta2);
  const float64x2_t step = vdupq_n_f64(c.lr / c.bias1);
  const float64x2_t ibias2 = vdupq_n_f64(1.0 / c.bias2);
  const float64x2_t eps = vdupq_n_f64(c.eps);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t vg = vld1q_f64(g + i);
    const float64x2_t vm = vfmaq_f64(vmulq_f64(ob1, vg), b1, vld1q_f64(m + i));
    const float64x2_t vv = vfmaq_f64(vmulq_f64(ob2, vmulq_f64(vg, vg)), b2, vld1q_f64(v + i));
    vst1q_f64(m + i, vm);
    vst1q_f64(v + i, vv);
    const float64x2_t denom = vaddq_f64(vsqrtq_f64(vmulq_f64(vv, ibias2)), eps);
    vst1q_f64(p + i, vsubq_f64(vld1q_f64(p + i), vdivq_f64(vmulq_f64(step, vm), denom)));
  }
  for (; i < n; ++i) {
    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
    p[i] -= (c.lr / c.bias1) * m[i] / (std::sqrt(v[i] / c.bias2) + c.eps);
  }
}

}  // namespace

const Kernels* neon_kernels() {
  static const Kernels k{Backend::Neon, dot, axpy, tanh_backward, normalize_clip, adam_update};
  return &k;
}

}  // namespace quadrl::simd
