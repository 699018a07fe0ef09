#pragma once

// Data-parallel inner loops used by the autoencoder forward pass, the
// trainer and steering. Every kernel has a portable scalar reference in
// kernels/scalar.cpp and, where the target supports it, an AVX2 (x86-64) or
// NEON (AArch64) variant. The variant is picked once at startup from CPU
// features and may be overridden with set_active_isa() or the SAESTEER_ISA
// environment variable (scalar|avx2|neon).
//
// Reductions accumulate in double. A float*float product is exact in double,
// so SIMD and scalar dot products differ only by summation order.
// Elementwise kernels (axpy, adam_update) use the same operation order in
// every variant and are bit-identical across variants.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace saesteer::kernels {

enum class Isa : std::uint8_t { Scalar, Avx2, Neon };

std::string_view isa_name(Isa isa);
Isa parse_isa(std::string_view name);

struct AdamCoefficients {
  float learning_rate;
  float beta1;
  float beta2;
  float epsilon;
  float bias_correction1;  // 1 - beta1^t
  float bias_correction2;  // 1 - beta2^t
};

struct KernelTable {
  Isa isa;
  double (*dot_f32)(const float* a, const float* b, std::size_t n);
  double (*dot_f64)(const double* a, const double* b, std::size_t n);
  double (*squared_distance_f32)(const float* a, const float* b, std::size_t n);
  // y += alpha * x
  void (*axpy_f32)(float alpha, const float* x, float* y, std::size_t n);
  void (*adam_update_f32)(float* param, const float* grad, float* moment1, float* moment2,
                          std::size_t n, const AdamCoefficients& c);
};

bool isa_available(Isa isa);
Isa detected_isa();

// Throws ValidationError when the variant is not compiled in or the CPU lacks it.
const KernelTable& table(Isa isa);

const KernelTable& active();
Isa active_isa();
void set_active_isa(Isa isa);

// Span conveniences over the active table. Lengths must match.
double dot(std::span<const float> a, std::span<const float> b);
double dot(std::span<const double> a, std::span<const double> b);
double squared_distance(std::span<const float> a, std::span<const float> b);
void axpy(float alpha, std::span<const float> x, std::span<float> y);

namespace scalar {
extern const KernelTable kTable;
}
namespace avx2 {
extern const KernelTable kTable;
}
namespace neon {
extern const KernelTable kTable;
}

}  // namespace saesteer::kernels
