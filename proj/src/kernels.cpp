#include "rodlimit/kernels.hpp"

#include <cstdlib>
#include <cstring>

#include "rodlimit/errors.hpp"

namespace rodlimit::kernels {

namespace scalar {

void svk_energy_stress(const double* f, std::size_t n, SvkParams p, double* energy, double* stress)
{
    for (std::size_t q = 0; q < n; ++q) {
        double F[9];
        for (int c = 0; c < 9; ++c)
            F[c] = f[c * n + q];
        double E[9];
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) {
                double s = F[a] * F[b] + F[3 + a] * F[3 + b] + F[6 + a] * F[6 + b];
                E[3 * a + b] = 0.5 * (s - (a == b ? 1.0 : 0.0));
            }
        const double tr = E[0] + E[4] + E[8];
        double norm2 = 0.0;
        for (int c = 0; c < 9; ++c)
            norm2 += E[c] * E[c];
        energy[q] = p.mu * norm2 + 0.5 * p.lambda * tr * tr;

        double S[9];
        for (int c = 0; c < 9; ++c)
            S[c] = 2.0 * p.mu * E[c];
        S[0] += p.lambda * tr;
        S[4] += p.lambda * tr;
        S[8] += p.lambda * tr;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                stress[(3 * i + j) * n + q] = F[3 * i] * S[j] + F[3 * i + 1] * S[3 + j] + F[3 * i + 2] * S[6 + j];
    }
}

void transpose_multiply(const double* a, const double* b, std::size_t n, double* out)
{
    for (std::size_t q = 0; q < n; ++q)
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                out[(3 * i + j) * n + q] = a[i * n + q] * b[j * n + q] + a[(3 + i) * n + q] * b[(3 + j) * n + q] +
                                           a[(6 + i) * n + q] * b[(6 + j) * n + q];
}

} // namespace scalar

Isa active_isa()
{
    static const Isa isa = [] {
        const char* env = std::getenv("RODLIMIT_SIMD");
        if (env && std::strcmp(env, "scalar") == 0)
            return Isa::Scalar;
#if defined(RODLIMIT_HAVE_AVX2)
        __builtin_cpu_init();
        if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
            return Isa::Avx2;
#endif
        return Isa::Scalar;
    }();
    return isa;
}

const char* isa_name(Isa isa) { return isa == Isa::Avx2 ? "avx2" : "scalar"; }

namespace {

SvkFn svk_impl()
{
#if defined(RODLIMIT_HAVE_AVX2)
    if (active_isa() == Isa::Avx2)
        return avx2::svk_energy_stress;
#endif
    return scalar::svk_energy_stress;
}

TransposeMultiplyFn tmul_impl()
{
#if defined(RODLIMIT_HAVE_AVX2)
    if (active_isa() == Isa::Avx2)
        return avx2::transpose_multiply;
#endif
    return scalar::transpose_multiply;
}

} // namespace

void svk_energy_stress(std::span<const double> f, SvkParams p, std::span<double> energy, std::span<double> stress)
{
    const std::size_t n = energy.size();
    if (f.size() != 9 * n || stress.size() != 9 * n)
        throw InputError("svk_energy_stress: batch size mismatch");
    static const SvkFn fn = svk_impl();
    fn(f.data(), n, p, energy.data(), stress.data());
}

void transpose_multiply(std::span<const double> a, std::span<const double> b, std::span<double> out)
{
    const std::size_t n = out.size() / 9;
    if (out.size() != 9 * n || a.size() != out.size() || b.size() != out.size())
        throw InputError("transpose_multiply: batch size mismatch");
    static const TransposeMultiplyFn fn = tmul_impl();
    fn(a.data(), b.data(), n, out.data());
}

} // namespace rodlimit::kernels
