// NEON variants for AArch64, where Advanced SIMD is mandatory.

#include <arm_neon.h>

#include <cmath>

#include "saesteer/kernels.hpp"

namespace saesteer::kernels::neon {
namespace {

double dot_f32(const float* a, const float* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float32x4_t va = vld1q_f32(a + i);
    const float32x4_t vb = vld1q_f32(b + i);
    acc0 = vaddq_f64(acc0, vmulq_f64(vcvt_f64_f32(vget_low_f32(va)),
                                     vcvt_f64_f32(vget_low_f32(vb))));
    acc1 = vaddq_f64(acc1, vmulq_f64(vcvt_high_f64_f32(va), vcvt_high_f64_f32(vb)));
  }
  double sum = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) {
    sum += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return sum;
}

double dot_f64(const double* a, const double* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vaddq_f64(acc0, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    acc1 = vaddq_f64(acc1, vmulq_f64(vld1q_f64(a + i + 2), vld1q_f64(b + i + 2)));
  }
  double sum = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) {
    sum += a[i] * b[i];
  }
  return sum;
}

double squared_distance_f32(const float* a, const float* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float32x4_t va = vld1q_f32(a + i);
    const float32x4_t vb = vld1q_f32(b + i);
    const float64x2_t d0 =
        vsubq_f64(vcvt_f64_f32(vget_low_f32(va)), vcvt_f64_f32(vget_low_f32(vb)));
    const float64x2_t d1 = vsubq_f64(vcvt_high_f64_f32(va), vcvt_high_f64_f32(vb));
    acc0 = vaddq_f64(acc0, vmulq_f64(d0, d0));
    acc1 = vaddq_f64(acc1, vmulq_f64(d1, d1));
  }
  double sum = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) {
    const double diff = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    sum += diff * diff;
  }
  return sum;
}

void axpy_f32(float alpha, const float* x, float* y, std::size_t n) {
  const float32x4_t va = vdupq_n_f32(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    vst1q_f32(y + i, vaddq_f32(vld1q_f32(y + i), vmulq_f32(va, vld1q_f32(x + i))));
  }
  for (; i < n; ++i) {
    y[i] = y[i] + alpha * x[i];
  }
}

void adam_update_f32(float* param, const float* grad, float* moment1, float* moment2,
                     std::size_t n, const AdamCoefficients& c) {
  const float one_minus_beta1 = 1.0f - c.beta1;
  const float one_minus_beta2 = 1.0f - c.beta2;
  const float32x4_t b1 = vdupq_n_f32(c.beta1);
  const float32x4_t b2 = vdupq_n_f32(c.beta2);
  const float32x4_t omb1 = vdupq_n_f32(one_minus_beta1);
  const float32x4_t omb2 = vdupq_n_f32(one_minus_beta2);
  const float32x4_t bc1 = vdupq_n_f32(c.bias_correction1);
  const float32x4_t bc2 = vdupq_n_f32(c.bias_correction2);
  const float32x4_t eps = vdupq_n_f32(c.epsilon);
  const float32x4_t lr = vdupq_n_f32(c.learning_rate);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float32x4_t g = vld1q_f32(grad + i);
    const float32x4_t m1 = vaddq_f32(vmulq_f32(b1, vld1q_f32(moment1 + i)), vmulq_f32(omb1, g));
    const float32x4_t m2 =
        vaddq_f32(vmulq_f32(b2, vld1q_f32(moment2 + i)), vmulq_f32(omb2, vmulq_f32(g, g)));
    vst1q_f32(moment1 + i, m1);
    vst1q_f32(moment2 + i, m2);
    const float32x4_t m_hat = vdivq_f32(m1, bc1);
    const float32x4_t v_hat = vdivq_f32(m2, bc2);
    const float32x4_t denom = vaddq_f32(vsqrtq_f32(v_hat), eps);
    const float32x4_t step = vmulq_f32(lr, vdivq_f32(m_hat, denom));
    vst1q_f32(param + i, vsubq_f32(vld1q_f32(param + i), step));
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
    Isa::Neon, dot_f32, dot_f64, squared_distance_f32, axpy_f32, adam_update_f32,
};

}  // namespace saesteer::kernels::neon
