#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <random>
#include <vector>

#include "saesteer/error.hpp"
#include "saesteer/kernels.hpp"

using namespace saesteer;
using kernels::Isa;

namespace {

std::vector<const kernels::KernelTable*> simd_tables() {
  std::vector<const kernels::KernelTable*> out;
  for (const Isa isa : {Isa::Avx2, Isa::Neon}) {
    if (kernels::isa_available(isa)) out.push_back(&kernels::table(isa));
  }
  return out;
}

std::vector<float> random_floats(std::size_t n, std::mt19937_64& rng, float scale = 1.0f) {
  std::normal_distribution<float> dist(0.0f, scale);
  std::vector<float> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

const std::size_t kLengths[] = {0, 1, 3, 4, 7, 8, 15, 16, 17, 31, 33, 100, 257, 1024};

}  // namespace

TEST(Kernels, ScalarAlwaysAvailable) {
  EXPECT_TRUE(kernels::isa_available(Isa::Scalar));
  EXPECT_EQ(kernels::table(Isa::Scalar).isa, Isa::Scalar);
  EXPECT_TRUE(kernels::isa_available(kernels::detected_isa()));
}

TEST(Kernels, ParseIsaNames) {
  EXPECT_EQ(kernels::parse_isa("scalar"), Isa::Scalar);
  EXPECT_EQ(kernels::parse_isa("avx2"), Isa::Avx2);
  EXPECT_EQ(kernels::parse_isa("neon"), Isa::Neon);
  EXPECT_THROW(kernels::parse_isa("sse9"), ValidationError);
}

TEST(Kernels, UnavailableIsaRejected) {
  for (const Isa isa : {Isa::Avx2, Isa::Neon}) {
    if (!kernels::isa_available(isa)) {
      EXPECT_THROW(kernels::table(isa), ValidationError);
    }
  }
}

TEST(Kernels, ScalarDotMatchesLongDouble) {
  std::mt19937_64 rng(11);
  const auto& s = kernels::table(Isa::Scalar);
  for (const auto n : kLengths) {
    const auto a = random_floats(n, rng);
    const auto b = random_floats(n, rng);
    long double ref = 0.0L;
    for (std::size_t i = 0; i < n; ++i) ref += static_cast<long double>(a[i]) * b[i];
    EXPECT_NEAR(s.dot_f32(a.data(), b.data(), n), static_cast<double>(ref), 1e-12) << n;
  }
}

TEST(Kernels, SimdDotMatchesScalar) {
  std::mt19937_64 rng(12);
  const auto& s = kernels::table(Isa::Scalar);
  for (const auto* t : simd_tables()) {
    for (const auto n : kLengths) {
      const auto a = random_floats(n, rng);
      const auto b = random_floats(n, rng);
      const double ref = s.dot_f32(a.data(), b.data(), n);
      EXPECT_NEAR(t->dot_f32(a.data(), b.data(), n), ref, 1e-12 * (1.0 + std::abs(ref)))
          << kernels::isa_name(t->isa) << " n=" << n;

      std::vector<double> da(a.begin(), a.end());
      std::vector<double> db(b.begin(), b.end());
      const double ref64 = s.dot_f64(da.data(), db.data(), n);
      EXPECT_NEAR(t->dot_f64(da.data(), db.data(), n), ref64, 1e-12 * (1.0 + std::abs(ref64)));

      const double dist = s.squared_distance_f32(a.data(), b.data(), n);
      EXPECT_NEAR(t->squared_distance_f32(a.data(), b.data(), n), dist, 1e-12 * (1.0 + dist));
    }
  }
}

TEST(Kernels, SimdAxpyBitIdentical) {
  std::mt19937_64 rng(13);
  const auto& s = kernels::table(Isa::Scalar);
  for (const auto* t : simd_tables()) {
    for (const auto n : kLengths) {
      const auto x = random_floats(n, rng);
      auto y1 = random_floats(n, rng);
      auto y2 = y1;
      s.axpy_f32(-0.37f, x.data(), y1.data(), n);
      t->axpy_f32(-0.37f, x.data(), y2.data(), n);
      EXPECT_EQ(0, std::memcmp(y1.data(), y2.data(), n * sizeof(float)))
          << kernels::isa_name(t->isa) << " n=" << n;
    }
  }
}

TEST(Kernels, SimdAdamBitIdentical) {
  std::mt19937_64 rng(14);
  const auto& s = kernels::table(Isa::Scalar);
  for (const auto* t : simd_tables()) {
    for (const auto n : kLengths) {
      auto p1 = random_floats(n, rng);
      auto m1a = random_floats(n, rng, 0.1f);
      auto m2a = random_floats(n, rng, 0.1f);
      for (auto& v : m2a) v = v * v;
      auto p2 = p1;
      auto m1b = m1a;
      auto m2b = m2a;
      for (int step = 1; step <= 5; ++step) {
        const auto g = random_floats(n, rng);
        const kernels::AdamCoefficients c{1e-3f, 0.9f, 0.999f, 1e-8f,
                                          1.0f - std::pow(0.9f, static_cast<float>(step)),
                                          1.0f - std::pow(0.999f, static_cast<float>(step))};
        s.adam_update_f32(p1.data(), g.data(), m1a.data(), m2a.data(), n, c);
        t->adam_update_f32(p2.data(), g.data(), m1b.data(), m2b.data(), n, c);
      }
      EXPECT_EQ(0, std::memcmp(p1.data(), p2.data(), n * sizeof(float))) << n;
      EXPECT_EQ(0, std::memcmp(m1a.data(), m1b.data(), n * sizeof(float))) << n;
      EXPECT_EQ(0, std::memcmp(m2a.data(), m2b.data(), n * sizeof(float))) << n;
    }
  }
}

TEST(Kernels, AdamFirstStepMovesByLearningRate) {
  // With zero moments, one bias-corrected step moves each weight by about lr * sign(g).
  std::vector<float> p{1.0f, -2.0f, 0.5f};
  std::vector<float> g{0.3f, -4.0f, 1e-3f};
  std::vector<float> m1(3, 0.0f);
  std::vector<float> m2(3, 0.0f);
  const kernels::AdamCoefficients c{0.01f, 0.9f, 0.999f, 1e-8f, 0.1f, 0.001f};
  kernels::table(Isa::Scalar).adam_update_f32(p.data(), g.data(), m1.data(), m2.data(), 3, c);
  EXPECT_NEAR(p[0], 0.99f, 1e-6);
  EXPECT_NEAR(p[1], -1.99f, 1e-6);
  EXPECT_NEAR(p[2], 0.49f, 1e-5);
}

TEST(Kernels, ActiveIsaOverride) {
  const Isa before = kernels::active_isa();
  kernels::set_active_isa(Isa::Scalar);
  EXPECT_EQ(kernels::active().isa, Isa::Scalar);
  kernels::set_active_isa(before);
  EXPECT_EQ(kernels::active_isa(), before);
}
