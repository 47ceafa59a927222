#pragma once

#include <cstdint>
#include <random>

namespace femtoffr {

// Deterministic random streams. std::mt19937_64 has a fully specified
// sequence, but the standard distributions do not, so the uniform/normal
// transforms are done by hand to keep drops bit-identical across compilers.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Derive an independent substream from (seed, a, b) via splitmix64.
    static Rng substream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Marsaglia polar method.
    double normal();

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

    /// Uniform integer in [0, n).
    std::uint64_t uniform_index(std::uint64_t n) {
        // Rejection-free modulo is biased for huge n; n here is small.
        return engine_() % n;
    }

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace femtoffr
