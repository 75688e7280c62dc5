#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "ckgr/rng.hpp"
#include "ckgr/simd/kernels.hpp"

namespace ckgr::simd {
namespace {

std::vector<float> random_floats(Rng& rng, std::size_t n, double scale) {
  std::vector<float> v(n);
  for (float& x : v) x = static_cast<float>(rng.normal() * scale);
  return v;
}

// Variants may only differ by summation order; a few ulps of the absolute sum bound that.
double order_tolerance(const float* a, const float* b, std::size_t n) {
  double abs_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) abs_sum += std::fabs(static_cast<double>(a[i]) * b[i]);
  return abs_sum * 1e-14 + 1e-300;
}

TEST(Simd, ScalarKernelsMatchPlainLoops) {
  Rng rng(1);
  for (std::size_t n : {0u, 1u, 3u, 8u, 17u, 64u}) {
    auto a = random_floats(rng, n, 1.0);
    auto b = random_floats(rng, n, 1.0);
    double dot_ref = 0.0, sq_ref = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      dot_ref += static_cast<double>(a[i]) * b[i];
      sq_ref += static_cast<double>(a[i]) * a[i];
    }
    EXPECT_EQ(scalar::dot(a.data(), b.data(), n), dot_ref);
    EXPECT_EQ(scalar::squared_norm(a.data(), n), sq_ref);
  }
}

TEST(Simd, ActiveVariantIsSupported) {
  EXPECT_TRUE(isa_supported(Isa::scalar));
  EXPECT_TRUE(isa_supported(active_isa()));
  EXPECT_FALSE(isa_name(active_isa()).empty());
}

class SimdEquivalence : public ::testing::TestWithParam<Isa> {
 protected:
  void SetUp() override {
    k_ = kernels_for(GetParam());
    if (!k_) GTEST_SKIP() << isa_name(GetParam()) << " not available on this machine";
  }
  const Kernels* k_ = nullptr;
};

TEST_P(SimdEquivalence, DotAndNormAgreeWithScalarOnAllTailLengths) {
  Rng rng(7);
  for (std::size_t n = 0; n <= 150; ++n) {
    for (double scale : {1e-3, 1.0, 1e4}) {
      auto a = random_floats(rng, n, scale);
      auto b = random_floats(rng, n, scale);
      const double tol = order_tolerance(a.data(), b.data(), n);
      EXPECT_NEAR(k_->dot(a.data(), b.data(), n), scalar::dot(a.data(), b.data(), n), tol)
          << "n=" << n;
      EXPECT_NEAR(k_->squared_norm(a.data(), n), scalar::squared_norm(a.data(), n),
                  order_tolerance(a.data(), a.data(), n))
          << "n=" << n;
    }
  }
}

TEST_P(SimdEquivalence, DotRowsAgreesWithScalar) {
  Rng rng(11);
  for (std::size_t d : {1u, 5u, 16u, 33u, 64u}) {
    const std::size_t rows = 37;
    auto q = random_floats(rng, d, 1.0);
    auto m = random_floats(rng, rows * d, 1.0);
    std::vector<double> got(rows), want(rows);
    k_->dot_rows(q.data(), m.data(), rows, d, got.data());
    scalar::dot_rows(q.data(), m.data(), rows, d, want.data());
    for (std::size_t i = 0; i < rows; ++i) {
      EXPECT_NEAR(got[i], want[i], order_tolerance(q.data(), m.data() + i * d, d)) << "d=" << d << " row=" << i;
    }
  }
}

TEST_P(SimdEquivalence, ExactProductsGiveIdenticalSums) {
  // Small integers: every partial sum is exact, so the order cannot matter.
  Rng rng(3);
  for (std::size_t n = 0; n < 100; ++n) {
    std::vector<float> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = static_cast<float>(static_cast<int>(rng.below(21)) - 10);
      b[i] = static_cast<float>(static_cast<int>(rng.below(21)) - 10);
    }
    EXPECT_EQ(k_->dot(a.data(), b.data(), n), scalar::dot(a.data(), b.data(), n));
  }
}

TEST_P(SimdEquivalence, ForcedDispatchRoutesToVariant) {
  const Isa before = active_isa();
  ASSERT_TRUE(force_isa(GetParam()));
  EXPECT_EQ(active_isa(), GetParam());
  Rng rng(5);
  auto a = random_floats(rng, 29, 1.0);
  auto b = random_floats(rng, 29, 1.0);
  EXPECT_EQ(dot(a.data(), b.data(), a.size()), k_->dot(a.data(), b.data(), a.size()));
  ASSERT_TRUE(force_isa(before));
}

INSTANTIATE_TEST_SUITE_P(Variants, SimdEquivalence, ::testing::Values(Isa::scalar, Isa::avx2, Isa::neon),
                         [](const auto& info) { return std::string(isa_name(info.param)); });

}  // namespace
}  // namespace ckgr::simd
