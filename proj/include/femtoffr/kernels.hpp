#pragma once

#include <cstddef>
#include <string>

namespace femtoffr {

// Dense numeric inner loops used by the interference and power-control code.
// A scalar reference implementation always exists; on x86 an AVX2+FMA variant
// is selected at runtime when the CPU supports it. The FEMTOFFR_KERNEL
// environment variable ("scalar" or "avx2") forces a specific backend.
struct Kernels {
    // y = sum_i x[i] * y[i]
    double (*dot)(const double* x, const double* y, std::size_t n);
    // y[i] += a * x[i]
    void (*axpy)(double a, const double* x, double* y, std::size_t n);
    // y[r] += sum_c A[r * n + c] * x[c]  (row-major m x n)
    void (*gemv_acc)(const double* A, const double* x, double* y,
                     std::size_t m, std::size_t n);
    // y[c] += sum_r A[r * n + c] * x[r]  (transposed accumulate)
    void (*gemv_t_acc)(const double* A, const double* x, double* y,
                       std::size_t m, std::size_t n);
    // out[i] = 10^(db[i] / 10)
    void (*db_to_linear_batch)(const double* db, double* out, std::size_t n);

    const char* name;
};

/// Backend picked at startup (honouring FEMTOFFR_KERNEL if set).
const Kernels& kernels();

/// Specific backends, for equivalence tests.
const Kernels& kernels_scalar();
const Kernels* kernels_avx2();  // nullptr when unsupported on this CPU

}  // namespace femtoffr
