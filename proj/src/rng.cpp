#include "femtoffr/rng.hpp"

#include <cmath>

namespace femtoffr {

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

Rng Rng::substream(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    std::uint64_t state = seed;
    std::uint64_t h = splitmix64(state);
    state ^= a * 0x9e3779b97f4a7c15ULL;
    h ^= splitmix64(state);
    state ^= b * 0xd1b54a32d192ed03ULL;
    h ^= splitmix64(state);
    return Rng(h);
}

double Rng::normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    double u, v, s;
    do {
        u = 2.0 * uniform() - 1.0;
        v = 2.0 * uniform() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    double scale = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * scale;
    have_spare_ = true;
    return u * scale;
}

}  // namespace femtoffr
