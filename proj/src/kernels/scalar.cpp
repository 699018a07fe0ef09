#include <cmath>

#include "saesteer/kernels.hpp"

namespace saesteer::kernels::scalar {
namespace {

double dot_f32(const float* a, const float* b, std::size_t n) {
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sum += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return sum;
}

double dot_f64(const double* a, const double* b, std::size_t n) {
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sum += a[i] * b[i];
  }
  return sum;
}

double squared_distance_f32(const float* a, const float* b, std::size_t n) {
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double diff = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    sum += diff * diff;
  }
  return sum;
}

void axpy_f32(float alpha, const float* x, float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = y[i] + alpha * x[i];
  }
}

void adam_update_f32(float* param, const float* grad, float* moment1, float* moment2,
                     std::size_t n, const AdamCoefficients& c) {
  const float one_minus_beta1 = 1.0f - c.beta1;
  const float one_minus_beta2 = 1.0f - c.beta2;
  for (std::size_t i = 0; i < n; ++i) {
    const float g = grad[i];
    const float m1 = c.beta1 * moment1[i] + one_minus_beta1 * g;
    const float m2 = c.beta2 * moment2[i] + one_minus_beta2 * (g * g);
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
    Isa::Scalar, dot_f32, dot_f64, squared_distance_f32, axpy_f32, adam_update_f32,
};

}  // namespace saesteer::kernels::scalar
