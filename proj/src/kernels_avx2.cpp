#include <immintrin.h>

#include "rodlimit/kernels.hpp"

namespace rodlimit::kernels::avx2 {

void svk_energy_stress(const double* f, std::size_t n, SvkParams p, double* energy, double* stress)
{
    const __m256d half = _mm256_set1_pd(0.5);
    const __m256d one = _mm256_set1_pd(1.0);
    const __m256d two_mu = _mm256_set1_pd(2.0 * p.mu);
    const __m256d mu = _mm256_set1_pd(p.mu);
    const __m256d lam = _mm256_set1_pd(p.lambda);
    const __m256d half_lam = _mm256_set1_pd(0.5 * p.lambda);

    std::size_t q = 0;
    for (; q + 4 <= n; q += 4) {
        __m256d F[9];
        for (int c = 0; c < 9; ++c)
            F[c] = _mm256_loadu_pd(f + c * n + q);

        __m256d E[9];
        for (int a = 0; a < 3; ++a)
            for (int b = a; b < 3; ++b) {
                __m256d s = _mm256_mul_pd(F[a], F[b]);
                s = _mm256_fmadd_pd(F[3 + a], F[3 + b], s);
                s = _mm256_fmadd_pd(F[6 + a], F[6 + b], s);
                if (a == b)
                    s = _mm256_sub_pd(s, one);
                E[3 * a + b] = E[3 * b + a] = _mm256_mul_pd(half, s);
            }
        const __m256d tr = _mm256_add_pd(_mm256_add_pd(E[0], E[4]), E[8]);
        __m256d diag = _mm256_mul_pd(E[0], E[0]);
        diag = _mm256_fmadd_pd(E[4], E[4], diag);
        diag = _mm256_fmadd_pd(E[8], E[8], diag);
        __m256d off = _mm256_mul_pd(E[1], E[1]);
        off = _mm256_fmadd_pd(E[2], E[2], off);
        off = _mm256_fmadd_pd(E[5], E[5], off);
        const __m256d norm2 = _mm256_add_pd(diag, _mm256_add_pd(off, off));
        const __m256d w = _mm256_fmadd_pd(half_lam, _mm256_mul_pd(tr, tr), _mm256_mul_pd(mu, norm2));
        _mm256_storeu_pd(energy + q, w);

        __m256d S[9];
        const __m256d lt = _mm256_mul_pd(lam, tr);
        for (int c = 0; c < 9; ++c)
            S[c] = _mm256_mul_pd(two_mu, E[c]);
        S[0] = _mm256_add_pd(S[0], lt);
        S[4] = _mm256_add_pd(S[4], lt);
        S[8] = _mm256_add_pd(S[8], lt);

        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                __m256d v = _mm256_mul_pd(F[3 * i], S[j]);
                v = _mm256_fmadd_pd(F[3 * i + 1], S[3 + j], v);
                v = _mm256_fmadd_pd(F[3 * i + 2], S[6 + j], v);
                _mm256_storeu_pd(stress + (3 * i + j) * n + q, v);
            }
    }
    if (q < n) {
        // Tail: run the reference kernel on a compacted copy.
        const std::size_t m = n - q;
        double ft[9 * 4] = {}, et[4] = {}, st[9 * 4] = {};
        for (int c = 0; c < 9; ++c)
            for (std::size_t r = 0; r < m; ++r)
                ft[c * m + r] = f[c * n + q + r];
        scalar::svk_energy_stress(ft, m, p, et, st);
        for (std::size_t r = 0; r < m; ++r) {
            energy[q + r] = et[r];
            for (int c = 0; c < 9; ++c)
                stress[c * n + q + r] = st[c * m + r];
        }
    }
}

void transpose_multiply(const double* a, const double* b, std::size_t n, double* out)
{
    std::size_t q = 0;
    for (; q + 4 <= n; q += 4) {
        __m256d A[9], B[9];
        for (int c = 0; c < 9; ++c) {
            A[c] = _mm256_loadu_pd(a + c * n + q);
            B[c] = _mm256_loadu_pd(b + c * n + q);
        }
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                __m256d v = _mm256_mul_pd(A[i], B[j]);
                v = _mm256_fmadd_pd(A[3 + i], B[3 + j], v);
                v = _mm256_fmadd_pd(A[6 + i], B[6 + j], v);
                _mm256_storeu_pd(out + (3 * i + j) * n + q, v);
            }
    }
    for (; q < n; ++q)
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                out[(3 * i + j) * n + q] = a[i * n + q] * b[j * n + q] + a[(3 + i) * n + q] * b[(3 + j) * n + q] +
                                           a[(6 + i) * n + q] * b[(6 + j) * n + q];
}

} // namespace rodlimit::kernels::avx2
