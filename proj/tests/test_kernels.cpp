#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <vector>

#include "femtoffr/kernels.hpp"
#include "femtoffr/rng.hpp"
#include "test_support.hpp"

using namespace femtoffr;
using testsupport::close_rel;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n, double lo, double hi) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(lo, hi);
    return v;
}

// Sizes chosen to hit every unrolled stride and remainder path.
const std::vector<std::size_t> kSizes = {0, 1, 2, 3, 4, 5, 7, 8,
                                         12, 15, 16, 17, 31, 33, 64, 67};

double dot_reference(const double* x, const double* y, std::size_t n) {
    long double acc = 0.0L;
    for (std::size_t i = 0; i < n; ++i)
        acc += static_cast<long double>(x[i]) * y[i];
    return static_cast<double>(acc);
}

void check_backend(const Kernels& k, double rel) {
    Rng rng(2024);
    for (std::size_t n : kSizes) {
        const auto x = random_vec(rng, n, -3.0, 5.0);
        const auto y = random_vec(rng, n, -2.0, 4.0);

        CHECK(close_rel(k.dot(x.data(), y.data(), n),
                        dot_reference(x.data(), y.data(), n), rel, 1e-12));

        auto acc = random_vec(rng, n, -1.0, 1.0);
        auto expected = acc;
        k.axpy(0.7, x.data(), acc.data(), n);
        for (std::size_t i = 0; i < n; ++i) expected[i] += 0.7 * x[i];
        for (std::size_t i = 0; i < n; ++i)
            CHECK(close_rel(acc[i], expected[i], rel, 1e-12));

        // Rectangular products, both orientations.
        const std::size_t m = (n % 5) + 1;
        const auto A = random_vec(rng, m * n, -2.0, 2.0);
        std::vector<double> out(m, 0.25), ref(m, 0.25);
        k.gemv_acc(A.data(), x.data(), out.data(), m, n);
        for (std::size_t r = 0; r < m; ++r)
            ref[r] += dot_reference(A.data() + r * n, x.data(), n);
        for (std::size_t r = 0; r < m; ++r)
            CHECK(close_rel(out[r], ref[r], rel, 1e-12));

        const auto xm = random_vec(rng, m, -2.0, 2.0);
        std::vector<double> outn(n, -0.5), refn(n, -0.5);
        k.gemv_t_acc(A.data(), xm.data(), outn.data(), m, n);
        for (std::size_t r = 0; r < m; ++r)
            for (std::size_t c = 0; c < n; ++c)
                refn[c] += A[r * n + c] * xm[r];
        for (std::size_t c = 0; c < n; ++c)
            CHECK(close_rel(outn[c], refn[c], rel, 1e-12));

        const auto db = random_vec(rng, n, -250.0, 150.0);
        std::vector<double> lin(n);
        k.db_to_linear_batch(db.data(), lin.data(), n);
        for (std::size_t i = 0; i < n; ++i)
            CHECK(close_rel(lin[i], std::pow(10.0, db[i] / 10.0), 1e-12));
    }
}

}  // namespace

TEST_CASE("scalar backend matches independent reference loops") {
    check_backend(kernels_scalar(), 1e-13);
    CHECK(std::strcmp(kernels_scalar().name, "scalar") == 0);
}

TEST_CASE("simd backend agrees with the scalar reference") {
    const Kernels* simd = kernels_avx2();
    if (!simd) {
        MESSAGE("no simd backend on this cpu; nothing to compare");
        return;
    }
    CHECK(std::strcmp(simd->name, "avx2") == 0);
    check_backend(*simd, 2e-13);

    // Direct cross-backend comparison on one larger case.
    Rng rng(7);
    const std::size_t n = 301;
    const auto x = random_vec(rng, n, 0.0, 10.0);
    const auto y = random_vec(rng, n, 0.0, 10.0);
    CHECK(close_rel(simd->dot(x.data(), y.data(), n),
                    kernels_scalar().dot(x.data(), y.data(), n), 1e-13));
}

TEST_CASE("db conversion is exact at decade points") {
    const double db[] = {0.0, 10.0, 20.0, -30.0, 30.0};
    const double expect[] = {1.0, 10.0, 100.0, 1e-3, 1e3};
    for (const Kernels* k : {&kernels_scalar(), kernels_avx2()}) {
        if (!k) continue;
        double out[5];
        k->db_to_linear_batch(db, out, 5);
        for (int i = 0; i < 5; ++i) CHECK(close_rel(out[i], expect[i], 1e-12));
    }
}

TEST_CASE("dispatch honours the backend override") {
    const char* forced = std::getenv("FEMTOFFR_KERNEL");
    if (forced && std::strcmp(forced, "scalar") == 0) {
        CHECK(std::strcmp(kernels().name, "scalar") == 0);
    } else if (kernels_avx2()) {
        CHECK(std::strcmp(kernels().name, "avx2") == 0);
    } else {
        CHECK(std::strcmp(kernels().name, "scalar") == 0);
    }
}
