#include "femtoffr/kernels.hpp"

#if defined(__AVX2__) && defined(__FMA__)

#include <immintrin.h>

namespace femtoffr {
namespace {

double dot_avx2(const double* x, const double* y, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    __m256d acc2 = _mm256_setzero_pd();
    __m256d acc3 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 16 <= n; i += 16) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i),
                               _mm256_loadu_pd(y + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4),
                               _mm256_loadu_pd(y + i + 4), acc1);
        acc2 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 8),
                               _mm256_loadu_pd(y + i + 8), acc2);
        acc3 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 12),
                               _mm256_loadu_pd(y + i + 12), acc3);
    }
    for (; i + 4 <= n; i += 4) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i),
                               _mm256_loadu_pd(y + i), acc0);
    }
    __m256d acc = _mm256_add_pd(_mm256_add_pd(acc0, acc1),
                                _mm256_add_pd(acc2, acc3));
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, acc);
    double total = lanes[0] + lanes[1] + lanes[2] + lanes[3];
    for (; i < n; ++i) total += x[i] * y[i];
    return total;
}

void axpy_avx2(double a, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256d y0 = _mm256_loadu_pd(y + i);
        __m256d y1 = _mm256_loadu_pd(y + i + 4);
        y0 = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), y0);
        y1 = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i + 4), y1);
        _mm256_storeu_pd(y + i, y0);
        _mm256_storeu_pd(y + i + 4, y1);
    }
    for (; i + 4 <= n; i += 4) {
        __m256d y0 = _mm256_loadu_pd(y + i);
        y0 = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), y0);
        _mm256_storeu_pd(y + i, y0);
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

void gemv_acc_avx2(const double* A, const double* x, double* y,
                   std::size_t m, std::size_t n) {
    for (std::size_t r = 0; r < m; ++r) {
        y[r] += dot_avx2(A + r * n, x, n);
    }
}

void gemv_t_acc_avx2(const double* A, const double* x, double* y,
                     std::size_t m, std::size_t n) {
    for (std::size_t r = 0; r < m; ++r) {
        axpy_avx2(x[r], A + r * n, y, n);
    }
}

// 2^t for each lane, valid for |t| <= 1020 (inputs are clamped to that
// range, which covers any dB value this simulator can produce).
__m256d exp2_pd(__m256d t) {
    t = _mm256_max_pd(t, _mm256_set1_pd(-1020.0));
    t = _mm256_min_pd(t, _mm256_set1_pd(1020.0));
    const __m256d n_real =
        _mm256_round_pd(t, _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
    const __m256d f = _mm256_sub_pd(t, n_real);
    // exp(f * ln 2) via its Taylor series; |f| <= 0.5 so degree 11 leaves
    // a truncation error below 1e-14 relative.
    const __m256d x = _mm256_mul_pd(f, _mm256_set1_pd(0.6931471805599453));
    __m256d p = _mm256_set1_pd(1.0 / 39916800.0);
    p = _mm256_fmadd_pd(p, x, _mm256_set1_pd(1.0 / 3628800.0));
    p = _mm256_fmadd_pd(p, x, _mm256_set1_pd(1.0 / 362880.0));
    p = _mm256_fmadd_pd(p, x, _mm256_set1_pd(1.0 / 40320.0));
    p = _mm256_fmadd_pd(p, x, _mm256_set1_pd(1.0 / 5040.0));
    p = _mm256_fmadd_pd(p, x, _mm256_set1_pd(1.0 / 720.0));
    p = _mm256_fmadd_pd(p, x, _mm256_set1_pd(1.0 / 120.0));
    p = _mm256_fmadd_pd(p, x, _mm256_set1_pd(1.0 / 24.0));
    p = _mm256_fmadd_pd(p, x, _mm256_set1_pd(1.0 / 6.0));
    p = _mm256_fmadd_pd(p, x, _mm256_set1_pd(0.5));
    p = _mm256_fmadd_pd(p, x, _mm256_set1_pd(1.0));
    p = _mm256_fmadd_pd(p, x, _mm256_set1_pd(1.0));
    // Scale by 2^n by building the exponent bits directly.
    const __m128i n32 = _mm256_cvtpd_epi32(n_real);
    const __m256i n64 = _mm256_cvtepi32_epi64(n32);
    const __m256i bits = _mm256_slli_epi64(
        _mm256_add_epi64(n64, _mm256_set1_epi64x(1023)), 52);
    return _mm256_mul_pd(p, _mm256_castsi256_pd(bits));
}

void db_to_linear_batch_avx2(const double* db, double* out, std::size_t n) {
    // 10^(db/10) = 2^(db * log2(10) / 10)
    const __m256d scale = _mm256_set1_pd(0.33219280948873623);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d t = _mm256_mul_pd(_mm256_loadu_pd(db + i), scale);
        _mm256_storeu_pd(out + i, exp2_pd(t));
    }
    if (i < n) {
        alignas(32) double tail_in[4] = {0.0, 0.0, 0.0, 0.0};
        alignas(32) double tail_out[4];
        for (std::size_t j = i; j < n; ++j) tail_in[j - i] = db[j];
        __m256d t = _mm256_mul_pd(_mm256_load_pd(tail_in), scale);
        _mm256_store_pd(tail_out, exp2_pd(t));
        for (std::size_t j = i; j < n; ++j) out[j] = tail_out[j - i];
    }
}

bool cpu_has_avx2_fma() {
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}

}  // namespace

const Kernels* kernels_avx2() {
    if (!cpu_has_avx2_fma()) return nullptr;
    static const Kernels k{dot_avx2, axpy_avx2, gemv_acc_avx2, gemv_t_acc_avx2,
                           db_to_linear_batch_avx2, "avx2"};
    return &k;
}

}  // namespace femtoffr

#else  // non-x86 build: backend unavailable

namespace femtoffr {
const Kernels* kernels_avx2() { return nullptr; }
}  // namespace femtoffr

#endif
