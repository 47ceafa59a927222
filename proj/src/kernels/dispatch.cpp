#include "femtoffr/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace femtoffr {
namespace {

const Kernels& pick() {
    if (const char* force = std::getenv("FEMTOFFR_KERNEL")) {
        if (std::strcmp(force, "scalar") == 0) return kernels_scalar();
        if (std::strcmp(force, "avx2") == 0) {
            if (const Kernels* k = kernels_avx2()) return *k;
        }
        return kernels_scalar();
    }
    if (const Kernels* k = kernels_avx2()) return *k;
    return kernels_scalar();
}

}  // namespace

const Kernels& kernels() {
    static const Kernels& chosen = pick();
    return chosen;
}

}  // namespace femtoffr
