#pragma once

// Hot inner loops behind a runtime-selected dispatch table. Every kernel has a
// scalar reference implementation; the AVX2+FMA variants must agree with it to
// rounding (see tests/simd_equivalence_test.cpp).

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace sigma::simd {

enum class Isa { scalar, avx2 };

struct KernelTable {
  Isa isa;
  const char* name;

  // Row-major C[M x N] = alpha * op(A) * op(B) + beta * C.
  // op(A) is M x K (A stored K x M when trans_a), op(B) is K x N (B stored
  // N x K when trans_b). beta == 0 overwrites C without reading it.
  void (*gemm)(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
               double alpha, const double* a, std::size_t lda, const double* b,
               std::size_t ldb, double beta, double* c, std::size_t ldc);

  double (*dot)(const double* x, const double* y, std::size_t n);

  // y += a * x
  void (*axpy)(double a, const double* x, double* y, std::size_t n);

  // out[i] = |a[i] - b[i]| on bytes
  void (*absdiff_u8)(const std::uint8_t* a, const std::uint8_t* b, std::uint8_t* out,
                     std::size_t n);
};

const KernelTable& scalar_kernels();
// Only valid when isa_supported(Isa::avx2).
const KernelTable& avx2_kernels();

bool isa_supported(Isa isa);

// Active table. Chosen on first use: SIGMA_SIMD=scalar|avx2 overrides,
// otherwise the widest supported ISA.
const KernelTable& kernels();
Isa active_isa();
// Throws std::invalid_argument if the ISA is not supported on this CPU.
void set_active_isa(Isa isa);

std::string_view isa_name(Isa isa);

}  // namespace sigma::simd
