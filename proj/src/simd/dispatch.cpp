#include "sigma/simd/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace sigma::simd {
namespace {

std::atomic<const KernelTable*> g_active{nullptr};

const KernelTable* pick_default() {
  if (const char* env = std::getenv("SIGMA_SIMD")) {
    const std::string value(env);
    if (value == "scalar") return &scalar_kernels();
    if (value == "avx2" && isa_supported(Isa::avx2)) return &avx2_kernels();
  }
  if (isa_supported(Isa::avx2)) return &avx2_kernels();
  return &scalar_kernels();
}

}  // namespace

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
#if defined(__x86_64__) || defined(__i386__)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& kernels() {
  const KernelTable* table = g_active.load(std::memory_order_acquire);
  if (table == nullptr) {
    table = pick_default();
    g_active.store(table, std::memory_order_release);
  }
  return *table;
}

Isa active_isa() { return kernels().isa; }

void set_active_isa(Isa isa) {
  if (!isa_supported(isa)) {
    throw std::invalid_argument("ISA not supported on this CPU: " + std::string(isa_name(isa)));
  }
  g_active.store(isa == Isa::avx2 ? &avx2_kernels() : &scalar_kernels(),
                 std::memory_order_release);
}

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

}  // namespace sigma::simd
