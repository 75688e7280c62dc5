#include <atomic>
#include <cstdlib>
#include <string>

#include "ckgr/simd/kernels.hpp"

namespace ckgr::simd {

namespace {

constexpr Kernels kScalar{Isa::scalar, &scalar::dot, &scalar::squared_norm,
                              &scalar::dot_rows};
#if defined(CKGR_HAVE_AVX2)
constexpr Kernels kAvx2{Isa::avx2, &avx2::dot, &avx2::squared_norm, &avx2::dot_rows};
#endif
#if defined(CKGR_HAVE_NEON)
constexpr Kernels kNeon{Isa::neon, &neon::dot, &neon::squared_norm, &neon::dot_rows};
#endif

const Kernels* table_for(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return &kScalar;
    case Isa::avx2:
#if defined(CKGR_HAVE_AVX2)
      if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) return &kAvx2;
#endif
      return nullptr;
    case Isa::neon:
#if defined(CKGR_HAVE_NEON)
      return &kNeon;
#else
      return nullptr;
#endif
  }
  return nullptr;
}

const Kernels* detect() {
  if (const char* env = std::getenv("CKGR_SIMD")) {
    std::string want(env);
    if (want == "scalar") return &kScalar;
    if (want == "avx2" && table_for(Isa::avx2)) return table_for(Isa::avx2);
    if (want == "neon" && table_for(Isa::neon)) return table_for(Isa::neon);
  }
  if (auto* t = table_for(Isa::avx2)) return t;
  if (auto* t = table_for(Isa::neon)) return t;
  return &kScalar;
}

std::atomic<const Kernels*>& current() {
  static std::atomic<const Kernels*> table{detect()};
  return table;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
    case Isa::neon:
      return "neon";
  }
  return "unknown";
}

Isa active_isa() { return current().load()->isa; }

bool isa_supported(Isa isa) { return table_for(isa) != nullptr; }

const Kernels* kernels_for(Isa isa) { return table_for(isa); }

bool force_isa(Isa isa) {
  const Kernels* t = table_for(isa);
  if (!t) return false;
  current().store(t);
  return true;
}

double dot(const float* a, const float* b, std::size_t n) { return current().load()->dot(a, b, n); }

double squared_norm(const float* a, std::size_t n) {
  return current().load()->squared_norm(a, n);
}

void dot_rows(const float* query, const float* rows, std::size_t n_rows, std::size_t dim,
              double* out) {
  current().load()->dot_rows(query, rows, n_rows, dim, out);
}

}  // namespace ckgr::simd
