// Built with -mavx2 -mfma; only reached after a runtime CPU check.

#include <immintrin.h>

#include <algorithm>
#include <cmath>

#include "simd_internal.hpp"

namespace quadrl::simd {
namespace {

double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void tanh_backward(const double* dy, const double* y, double* dx, std::size_t n) {
  const __m256d one = _mm256_set1_pd(1.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vy = _mm256_loadu_pd(y + i);
    const __m256d d = _mm256_fnmadd_pd(vy, vy, one);
    _mm256_storeu_pd(dx + i, _mm256_mul_pd(_mm256_loadu_pd(dy + i), d));
  }
  for (; i < n; ++i) dx[i] = dy[i] * (1.0 - y[i] * y[i]);
}

void normalize_clip(const double* x, const double* mean, const double* inv_std, double clip, double* out,
                    std::size_t n) {
  const __m256d hi = _mm256_set1_pd(clip);
  const __m256d lo = _mm256_set1_pd(-clip);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d z = _mm256_mul_pd(_mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(mean + i)),
                                    _mm256_loadu_pd(inv_std + i));
    _mm256_storeu_pd(out + i, _mm256_min_pd(_mm256_max_pd(z, lo), hi));
  }
  for (; i < n; ++i) out[i] = std::clamp((x[i] - mean[i]) * inv_std[i], -clip, clip);
}

void adam_update(double* p, double* m, double* v, const double* g, std::size_t n, const AdamCoeffs& c) {
  const __m256d b1 = _mm256_set1_pd(c.beta1);
  const __m256d b2 = _mm256_set1_pd(c.beta2);
  const __m256d ob1 = _mm256_set1_pd(1.0 - c.beta1);
  const __m256d ob2 = _mm256_set1_pd(1.0 - c.beta2);
  const __m256d step = _mm256_set1_pd(c.lr / c.bias1);
  const __m256d ibias2 = _mm256_set1_pd(1.0 / c.bias2);
  const __m256d eps = _mm256_set1_pd(c.eps);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vg = _mm256_loadu_pd(g + i);
    const __m256d vm = _mm256_fmadd_pd(b1, _mm256_loadu_pd(m + i), _mm256_mul_pd(ob1, vg));
    const __m256d vv = _mm256_fmadd_pd(b2, _mm256_loadu_pd(v + i), _mm256_mul_pd(ob2, _mm256_mul_pd(vg, vg)));
    _mm256_storeu_pd(m + i, vm);
    _mm256_storeu_pd(v + i, vv);
    const __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(_mm256_mul_pd(vv, ibias2)), eps);
    _mm256_storeu_pd(p + i, _mm256_sub_pd(_mm256_loadu_pd(p + i), _mm256_div_pd(_mm256_mul_pd(step, vm), denom)));
  }
  for (; i < n; ++i) {
    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
    p[i] -= (c.lr / c.bias1) * m[i] / (std::sqrt(v[i] / c.bias2) + c.eps);
  }
}

}  // namespace

const Kernels* avx2_kernels() {
  static const Kernels k{Backend::Avx2, dot, axpy, tanh_backward, normalize_clip, adam_update};
  return &k;
}

}  // namespace quadrl::simd
