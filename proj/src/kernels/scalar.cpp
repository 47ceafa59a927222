#include "femtoffr/kernels.hpp"

#include <cmath>

namespace femtoffr {
namespace {

double dot_scalar(const double* x, const double* y, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
    return acc;
}

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void gemv_acc_scalar(const double* A, const double* x, double* y,
                     std::size_t m, std::size_t n) {
    for (std::size_t r = 0; r < m; ++r) {
        y[r] += dot_scalar(A + r * n, x, n);
    }
}

void gemv_t_acc_scalar(const double* A, const double* x, double* y,
                       std::size_t m, std::size_t n) {
    for (std::size_t r = 0; r < m; ++r) {
        axpy_scalar(x[r], A + r * n, y, n);
    }
}

void db_to_linear_batch_scalar(const double* db, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = std::pow(10.0, db[i] * 0.1);
}

}  // namespace

const Kernels& kernels_scalar() {
    static const Kernels k{dot_scalar, axpy_scalar, gemv_acc_scalar,
                           gemv_t_acc_scalar, db_to_linear_batch_scalar,
                           "scalar"};
    return k;
}

}  // namespace femtoffr
