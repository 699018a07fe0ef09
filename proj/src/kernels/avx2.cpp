// AVX2 variants. This translation unit is compiled with -mavx2 and must only
// be entered after dispatch has confirmed CPU support.

#include <immintrin.h>

#include <cmath>

#include "saesteer/kernels.hpp"

namespace saesteer::kernels::avx2 {
namespace {

inline double hsum_pd(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d pair = _mm_add_pd(lo, hi);
  const __m128d swapped = _mm_unpackhi_pd(pair, pair);
  return _mm_cvtsd_f64(_mm_add_sd(pair, swapped));
}

double dot_f32(const float* a, const float* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  __m256d acc2 = _mm256_setzero_pd();
  __m256d acc3 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    const __m256 va0 = _mm256_loadu_ps(a + i);
    const __m256 vb0 = _mm256_loadu_ps(b + i);
    const __m256 va1 = _mm256_loadu_ps(a + i + 8);
    const __m256 vb1 = _mm256_loadu_ps(b + i + 8);
    acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(_mm256_cvtps_pd(_mm256_castps256_ps128(va0)),
                                             _mm256_cvtps_pd(_mm256_castps256_ps128(vb0))));
    acc1 = _mm256_add_pd(acc1, _mm256_mul_pd(_mm256_cvtps_pd(_mm256_extractf128_ps(va0, 1)),
                                             _mm256_cvtps_pd(_mm256_extractf128_ps(vb0, 1))));
    acc2 = _mm256_add_pd(acc2, _mm256_mul_pd(_mm256_cvtps_pd(_mm256_castps256_ps128(va1)),
                                             _mm256_cvtps_pd(_mm256_castps256_ps128(vb1))));
    acc3 = _mm256_add_pd(acc3, _mm256_mul_pd(_mm256_cvtps_pd(_mm256_extractf128_ps(va1, 1)),
                                             _mm256_cvtps_pd(_mm256_extractf128_ps(vb1, 1))));
  }
  for (; i + 4 <= n; i += 4) {
    const __m256d va = _mm256_cvtps_pd(_mm_loadu_ps(a + i));
    const __m256d vb = _mm256_cvtps_pd(_mm_loadu_ps(b + i));
    acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(va, vb));
  }
  double sum = hsum_pd(_mm256_add_pd(_mm256_add_pd(acc0, acc1), _mm256_add_pd(acc2, acc3)));
  for (; i < n; ++i) {
    sum += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return sum;
}

double dot_f64(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    acc1 = _mm256_add_pd(acc1,
                         _mm256_mul_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4)));
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  double sum = hsum_pd(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) {
    sum += a[i] * b[i];
  }
  return sum;
}

double squared_distance_f32(const float* a, const float* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 va = _mm256_loadu_ps(a + i);
    const __m256 vb = _mm256_loadu_ps(b + i);
    const __m256d d0 = _mm256_sub_pd(_mm256_cvtps_pd(_mm256_castps256_ps128(va)),
                                     _mm256_cvtps_pd(_mm256_castps256_ps128(vb)));
    const __m256d d1 = _mm256_sub_pd(_mm256_cvtps_pd(_mm256_extractf128_ps(va, 1)),
                                     _mm256_cvtps_pd(_mm256_extractf128_ps(vb, 1)));
    acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(d0, d0));
    acc1 = _mm256_add_pd(acc1, _mm256_mul_pd(d1, d1));
  }
  double sum = hsum_pd(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) {
    const double diff = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    sum += diff * diff;
  }
  return sum;
}

void axpy_f32(float alpha, const float* x, float* y, std::size_t n) {
  const __m256 va = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 prod = _mm256_mul_ps(va, _mm256_loadu_ps(x + i));
    _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(y + i), prod));
  }
  for (; i < n; ++i) {
    y[i] = y[i] + alpha * x[i];
  }
}

void adam_update_f32(float* param, const float* grad, float* moment1, float* moment2,
                     std::size_t n, const AdamCoefficients& c) {
  const float one_minus_beta1 = 1.0f - c.beta1;
  const float one_minus_beta2 = 1.0f - c.beta2;
  const __m256 b1 = _mm256_set1_ps(c.beta1);
  const __m256 b2 = _mm256_set1_ps(c.beta2);
  const __m256 omb1 = _mm256_set1_ps(one_minus_beta1);
  const __m256 omb2 = _mm256_set1_ps(one_minus_beta2);
  const __m256 bc1 = _mm256_set1_ps(c.bias_correction1);
  const __m256 bc2 = _mm256_set1_ps(c.bias_correction2);
  const __m256 eps = _mm256_set1_ps(c.epsilon);
  const __m256 lr = _mm256_set1_ps(c.learning_rate);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 g = _mm256_loadu_ps(grad + i);
    const __m256 m1 = _mm256_add_ps(_mm256_mul_ps(b1, _mm256_loadu_ps(moment1 + i)),
                                    _mm256_mul_ps(omb1, g));
    const __m256 m2 = _mm256_add_ps(_mm256_mul_ps(b2, _mm256_loadu_ps(moment2 + i)),
                                    _mm256_mul_ps(omb2, _mm256_mul_ps(g, g)));
    _mm256_storeu_ps(moment1 + i, m1);
    _mm256_storeu_ps(moment2 + i, m2);
    const __m256 m_hat = _mm256_div_ps(m1, bc1);
    const __m256 v_hat = _mm256_div_ps(m2, bc2);
    const __m256 denom = _mm256_add_ps(_mm256_sqrt_ps(v_hat), eps);
    const __m256 step = _mm256_mul_ps(lr, _mm256_div_ps(m_hat, denom));
    _mm256_storeu_ps(param + i, _mm256_sub_ps(_mm256_loadu_ps(param + i), step));
  }
  for (; i < n; ++i) {
    const float gi = grad[i];
    const float m1 = c.beta1 * moment1[i] + one_minus_beta1 * gi;
    const float m2 = c.beta2 * moment2[i] + one_minus_beta2 * (gi * gi);
    moment1[i] = m1;
    moment2[i] = m2;
    const float m_hat = m1 / c.bias_correction1;
    const float v_hat = m2 / c.bias_correction2;
    const float denom = std::sqrt(v_hat) + c.epsilon;
    param[i] = param[i] - c.learning_rate * (m_hat / denom);
  }
}

}  // namespace

const KernelTable kTable{
    Isa::Avx2, dot_f32, dot_f64, squared_distance_f32, axpy_f32, adam_update_f32,
};

}  // namespace saesteer::kernels::avx2
