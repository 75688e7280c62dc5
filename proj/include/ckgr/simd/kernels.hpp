#pragma once

// Similarity kernels over float32 storage with float64 accumulation.
//
// Every kernel exists as a scalar reference and, where the target supports it,
// an AVX2+FMA (x86-64) or NEON (aarch64) variant. The active variant is chosen
// once at startup from CPU feature detection and can be pinned with the
// CKGR_SIMD environment variable ("scalar", "avx2", "neon") or with force_isa().
//
// Products of two floats are exact in double precision, so variants differ
// only in the association order of the final sums.

#include <cstddef>
#include <string_view>

namespace ckgr::simd {

enum class Isa { scalar, avx2, neon };

std::string_view isa_name(Isa isa);

/// ISA of the kernels currently in use.
Isa active_isa();

/// True when `isa` was compiled in and the CPU supports it.
bool isa_supported(Isa isa);

/// Pins the kernels to `isa`; returns false (and changes nothing) if unsupported.
bool force_isa(Isa isa);

struct Kernels {
  Isa isa;
  double (*dot)(const float*, const float*, std::size_t);
  double (*squared_norm)(const float*, std::size_t);
  void (*dot_rows)(const float*, const float*, std::size_t, std::size_t, double*);
};

/// Kernel set of one variant, or nullptr when it is not available here.
const Kernels* kernels_for(Isa isa);

double dot(const float* a, const float* b, std::size_t n);
double squared_norm(const float* a, std::size_t n);

/// out[i] = dot(query, rows + i * dim) for i in [0, n_rows).
void dot_rows(const float* query, const float* rows, std::size_t n_rows, std::size_t dim,
              double* out);

// Per-variant definitions; the avx2 and neon ones exist only when compiled in.
namespace scalar {
double dot(const float* a, const float* b, std::size_t n);
double squared_norm(const float* a, std::size_t n);
void dot_rows(const float* query, const float* rows, std::size_t n_rows, std::size_t dim,
              double* out);
}  // namespace scalar

namespace avx2 {
double dot(const float* a, const float* b, std::size_t n);
double squared_norm(const float* a, std::size_t n);
void dot_rows(const float* query, const float* rows, std::size_t n_rows, std::size_t dim,
              double* out);
}  // namespace avx2

namespace neon {
double dot(const float* a, const float* b, std::size_t n);
double squared_norm(const float* a, std::size_t n);
void dot_rows(const float* query, const float* rows, std::size_t n_rows, std::size_t dim,
              double* out);
}  // namespace neon

}  // namespace ckgr::simd
