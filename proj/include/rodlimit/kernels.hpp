#pragma once

// Batched per-point 3×3 kernels for the quadrature loops of the 3D solver.
//
// Batches use a structure-of-arrays layout: for a batch of n matrices,
// component c = 3 * i + j of matrix p is stored at data[c * n + p].
// Each kernel has a scalar reference implementation and, on x86-64, an
// AVX2/FMA variant; the public entry points dispatch at runtime.

#include <cstddef>
#include <span>

namespace rodlimit::kernels {

enum class Isa { Scalar, Avx2 };

/// Best instruction set supported by this CPU, unless overridden by the
/// environment variable RODLIMIT_SIMD=scalar.
Isa active_isa();
const char* isa_name(Isa isa);

struct SvkParams {
    double lambda = 0.0;
    double mu = 1.0;
};

// W = μ|E|² + λ/2 (tr E)², P = F (2μE + λ tr E Id), E = (FᵀF - Id)/2.
// f, stress: 9n entries; energy: n entries.
using SvkFn = void (*)(const double* f, std::size_t n, SvkParams p, double* energy, double* stress);
// out_p = a_pᵀ b_p
using TransposeMultiplyFn = void (*)(const double* a, const double* b, std::size_t n, double* out);

namespace scalar {
void svk_energy_stress(const double* f, std::size_t n, SvkParams p, double* energy, double* stress);
void transpose_multiply(const double* a, const double* b, std::size_t n, double* out);
} // namespace scalar

#if defined(RODLIMIT_HAVE_AVX2)
namespace avx2 {
void svk_energy_stress(const double* f, std::size_t n, SvkParams p, double* energy, double* stress);
void transpose_multiply(const double* a, const double* b, std::size_t n, double* out);
} // namespace avx2
#endif

void svk_energy_stress(std::span<const double> f, SvkParams p, std::span<double> energy, std::span<double> stress);
void transpose_multiply(std::span<const double> a, std::span<const double> b, std::span<double> out);

} // namespace rodlimit::kernels
