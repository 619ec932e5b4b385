#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"
#include "sigma/core/rng.hpp"
#include "sigma/simd/kernels.hpp"

using namespace sigma;
using simd::Isa;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

bool have_avx2() { return simd::isa_supported(Isa::avx2); }

}  // namespace

TEST_CASE("scalar table is always available and selectable") {
  CHECK(simd::isa_supported(Isa::scalar));
  const Isa before = simd::active_isa();
  simd::set_active_isa(Isa::scalar);
  CHECK(simd::active_isa() == Isa::scalar);
  simd::set_active_isa(before);
}

TEST_CASE("gemm: avx2 agrees with scalar reference for every transpose combination") {
  if (!have_avx2()) return;
  const auto& ref = simd::scalar_kernels();
  const auto& fast = simd::avx2_kernels();
  Rng rng(11);
  const std::size_t shapes[][3] = {{1, 1, 1}, {3, 5, 7}, {4, 8, 16}, {9, 17, 33}, {37, 19, 70}};
  for (const auto& s : shapes) {
    const std::size_t m = s[0], n = s[1], k = s[2];
    for (int ta = 0; ta < 2; ++ta)
      for (int tb = 0; tb < 2; ++tb)
        for (double beta : {0.0, 1.0, 0.5}) {
          const auto a = random_vec(m * k, rng);
          const auto b = random_vec(k * n, rng);
          auto c_ref = random_vec(m * n, rng);
          auto c_fast = c_ref;
          const std::size_t lda = ta ? m : k;
          const std::size_t ldb = tb ? k : n;
          ref.gemm(ta, tb, m, n, k, 0.75, a.data(), lda, b.data(), ldb, beta, c_ref.data(), n);
          fast.gemm(ta, tb, m, n, k, 0.75, a.data(), lda, b.data(), ldb, beta, c_fast.data(), n);
          for (std::size_t i = 0; i < m * n; ++i) {
            REQUIRE(std::fabs(c_ref[i] - c_fast[i]) <= 1e-12 * (1.0 + std::fabs(c_ref[i])));
          }
        }
  }
}

TEST_CASE("dot and axpy: avx2 agrees with scalar on ragged lengths") {
  if (!have_avx2()) return;
  Rng rng(5);
  for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 8u, 9u, 31u, 1000u}) {
    const auto x = random_vec(n, rng);
    const auto y = random_vec(n, rng);
    const double d_ref = simd::scalar_kernels().dot(x.data(), y.data(), n);
    const double d_fast = simd::avx2_kernels().dot(x.data(), y.data(), n);
    CHECK(std::fabs(d_ref - d_fast) <= 1e-12 * (1.0 + std::fabs(d_ref)));

    auto y_ref = y, y_fast = y;
    simd::scalar_kernels().axpy(-1.25, x.data(), y_ref.data(), n);
    simd::avx2_kernels().axpy(-1.25, x.data(), y_fast.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::fabs(y_ref[i] - y_fast[i]) <= 1e-14);
  }
}

TEST_CASE("absdiff_u8: avx2 is bit-identical to scalar") {
  if (!have_avx2()) return;
  Rng rng(9);
  for (std::size_t n : {0u, 5u, 32u, 33u, 100u, 4097u}) {
    std::vector<std::uint8_t> a(n), b(n), o1(n), o2(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = static_cast<std::uint8_t>(rng.below(256));
      b[i] = static_cast<std::uint8_t>(rng.below(256));
    }
    simd::scalar_kernels().absdiff_u8(a.data(), b.data(), o1.data(), n);
    simd::avx2_kernels().absdiff_u8(a.data(), b.data(), o2.data(), n);
    CHECK(o1 == o2);
  }
}
