// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.

#include "sigma/simd/kernels.hpp"

#if defined(__x86_64__) || defined(__i386__)
#include <immintrin.h>

#include <vector>

namespace sigma::simd {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

// C += alpha * A * B, all row-major and untransposed.
void gemm_nn_accumulate(std::size_t m, std::size_t n, std::size_t k, double alpha,
                        const double* a, std::size_t lda, const double* b, std::size_t ldb,
                        double* c, std::size_t ldc) {
  const __m256d valpha = _mm256_set1_pd(alpha);
  const std::size_t n8 = n - n % 8;
  const std::size_t m4 = m - m % 4;
  for (std::size_t j = 0; j < n8; j += 8) {
    std::size_t i = 0;
    for (; i < m4; i += 4) {
      __m256d c00 = _mm256_setzero_pd(), c01 = _mm256_setzero_pd();
      __m256d c10 = _mm256_setzero_pd(), c11 = _mm256_setzero_pd();
      __m256d c20 = _mm256_setzero_pd(), c21 = _mm256_setzero_pd();
      __m256d c30 = _mm256_setzero_pd(), c31 = _mm256_setzero_pd();
      const double* a0 = a + (i + 0) * lda;
      const double* a1 = a + (i + 1) * lda;
      const double* a2 = a + (i + 2) * lda;
      const double* a3 = a + (i + 3) * lda;
      for (std::size_t p = 0; p < k; ++p) {
        const double* brow = b + p * ldb + j;
        const __m256d b0 = _mm256_loadu_pd(brow);
        const __m256d b1 = _mm256_loadu_pd(brow + 4);
        __m256d av = _mm256_broadcast_sd(a0 + p);
        c00 = _mm256_fmadd_pd(av, b0, c00);
        c01 = _mm256_fmadd_pd(av, b1, c01);
        av = _mm256_broadcast_sd(a1 + p);
        c10 = _mm256_fmadd_pd(av, b0, c10);
        c11 = _mm256_fmadd_pd(av, b1, c11);
        av = _mm256_broadcast_sd(a2 + p);
        c20 = _mm256_fmadd_pd(av, b0, c20);
        c21 = _mm256_fmadd_pd(av, b1, c21);
        av = _mm256_broadcast_sd(a3 + p);
        c30 = _mm256_fmadd_pd(av, b0, c30);
        c31 = _mm256_fmadd_pd(av, b1, c31);
      }
      auto flush = [&](std::size_t row, __m256d lo, __m256d hi) {
        double* crow = c + row * ldc + j;
        _mm256_storeu_pd(crow, _mm256_fmadd_pd(valpha, lo, _mm256_loadu_pd(crow)));
        _mm256_storeu_pd(crow + 4, _mm256_fmadd_pd(valpha, hi, _mm256_loadu_pd(crow + 4)));
      };
      flush(i + 0, c00, c01);
      flush(i + 1, c10, c11);
      flush(i + 2, c20, c21);
      flush(i + 3, c30, c31);
    }
    for (; i < m; ++i) {
      __m256d lo = _mm256_setzero_pd(), hi = _mm256_setzero_pd();
      const double* arow = a + i * lda;
      for (std::size_t p = 0; p < k; ++p) {
        const __m256d av = _mm256_broadcast_sd(arow + p);
        lo = _mm256_fmadd_pd(av, _mm256_loadu_pd(b + p * ldb + j), lo);
        hi = _mm256_fmadd_pd(av, _mm256_loadu_pd(b + p * ldb + j + 4), hi);
      }
      double* crow = c + i * ldc + j;
      _mm256_storeu_pd(crow, _mm256_fmadd_pd(valpha, lo, _mm256_loadu_pd(crow)));
      _mm256_storeu_pd(crow + 4, _mm256_fmadd_pd(valpha, hi, _mm256_loadu_pd(crow + 4)));
    }
  }
  // Remaining columns.
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = n8; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * lda + p] * b[p * ldb + j];
      c[i * ldc + j] += alpha * acc;
    }
  }
}

void gemm_avx2(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
               double alpha, const double* a, std::size_t lda, const double* b,
               std::size_t ldb, double beta, double* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * ldc;
    if (beta == 0.0) {
      for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
    } else if (beta != 1.0) {
      for (std::size_t j = 0; j < n; ++j) crow[j] *= beta;
    }
  }
  if (m == 0 || n == 0 || k == 0) return;

  std::vector<double> a_buf;
  std::vector<double> b_buf;
  if (trans_a) {
    a_buf.resize(m * k);
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t i = 0; i < m; ++i) a_buf[i * k + p] = a[p * lda + i];
    a = a_buf.data();
    lda = k;
  }
  if (trans_b) {
    b_buf.resize(k * n);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) b_buf[p * n + j] = b[j * ldb + p];
    b = b_buf.data();
    ldb = n;
  }
  gemm_nn_accumulate(m, n, k, alpha, a, lda, b, ldb, c, ldc);
}

double dot_avx2(const double* x, const double* y, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void axpy_avx2(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void absdiff_u8_avx2(const std::uint8_t* a, const std::uint8_t* b, std::uint8_t* out,
                     std::size_t n) {
  std::size_t i = 0;
  for (; i + 32 <= n; i += 32) {
    const __m256i va = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(a + i));
    const __m256i vb = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(b + i));
    const __m256i d = _mm256_or_si256(_mm256_subs_epu8(va, vb), _mm256_subs_epu8(vb, va));
    _mm256_storeu_si256(reinterpret_cast<__m256i*>(out + i), d);
  }
  for (; i < n; ++i) {
    out[i] = static_cast<std::uint8_t>(a[i] > b[i] ? a[i] - b[i] : b[i] - a[i]);
  }
}

}  // namespace

const KernelTable& avx2_kernels() {
  static const KernelTable table{Isa::avx2, "avx2", &gemm_avx2, &dot_avx2, &axpy_avx2,
                                 &absdiff_u8_avx2};
  return table;
}

}  // namespace sigma::simd

#else

#include <stdexcept>

namespace sigma::simd {
const KernelTable& avx2_kernels() { throw std::logic_error("AVX2 kernels not built for this target"); }
}  // namespace sigma::simd

#endif
