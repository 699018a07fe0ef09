#include <atomic>
#include <cstdlib>
#include <string>

#include "saesteer/error.hpp"
#include "saesteer/kernels.hpp"

namespace saesteer::kernels {
namespace {

bool cpu_has(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return true;
    case Isa::Avx2:
#if defined(SAESTEER_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
      return __builtin_cpu_supports("avx2");
#else
      return false;
#endif
    case Isa::Neon:
#if defined(SAESTEER_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

const KernelTable* table_ptr(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return &scalar::kTable;
    case Isa::Avx2:
#if defined(SAESTEER_HAVE_AVX2)
      return &avx2::kTable;
#else
      return nullptr;
#endif
    case Isa::Neon:
#if defined(SAESTEER_HAVE_NEON)
      return &neon::kTable;
#else
      return nullptr;
#endif
  }
  return nullptr;
}

const KernelTable* initial_table() {
  if (const char* env = std::getenv("SAESTEER_ISA"); env != nullptr && *env != '\0') {
    return &table(parse_isa(env));
  }
  return &table(detected_isa());
}

std::atomic<const KernelTable*>& active_slot() {
  static std::atomic<const KernelTable*> slot{initial_table()};
  return slot;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return "scalar";
    case Isa::Avx2:
      return "avx2";
    case Isa::Neon:
      return "neon";
  }
  return "unknown";
}

Isa parse_isa(std::string_view name) {
  if (name == "scalar") return Isa::Scalar;
  if (name == "avx2") return Isa::Avx2;
  if (name == "neon") return Isa::Neon;
  throw ValidationError("unknown instruction set '" + std::string(name) +
                        "' (expected scalar, avx2 or neon)");
}

bool isa_available(Isa isa) { return table_ptr(isa) != nullptr && cpu_has(isa); }

Isa detected_isa() {
  if (isa_available(Isa::Avx2)) return Isa::Avx2;
  if (isa_available(Isa::Neon)) return Isa::Neon;
  return Isa::Scalar;
}

const KernelTable& table(Isa isa) {
  if (!isa_available(isa)) {
    throw ValidationError("instruction set '" + std::string(isa_name(isa)) +
                          "' is not available on this build or CPU");
  }
  return *table_ptr(isa);
}

const KernelTable& active() { return *active_slot().load(std::memory_order_acquire); }

Isa active_isa() { return active().isa; }

void set_active_isa(Isa isa) { active_slot().store(&table(isa), std::memory_order_release); }

double dot(std::span<const float> a, std::span<const float> b) {
  check_dimension("dot operand", a.size(), b.size());
  return active().dot_f32(a.data(), b.data(), a.size());
}

double dot(std::span<const double> a, std::span<const double> b) {
  check_dimension("dot operand", a.size(), b.size());
  return active().dot_f64(a.data(), b.data(), a.size());
}

double squared_distance(std::span<const float> a, std::span<const float> b) {
  check_dimension("squared_distance operand", a.size(), b.size());
  return active().squared_distance_f32(a.data(), b.data(), a.size());
}

void axpy(float alpha, std::span<const float> x, std::span<float> y) {
  check_dimension("axpy operand", y.size(), x.size());
  active().axpy_f32(alpha, x.data(), y.data(), x.size());
}

}  // namespace saesteer::kernels
