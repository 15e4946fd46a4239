#ifndef BIOAUG_RNG_HPP
#define BIOAUG_RNG_HPP

#include <cmath>
#include <cstdint>

namespace bioaug {

// Counter-based splittable generator. Every stream is a pure function of the
// seeds it was derived from, so results are reproducible under any batch
// ordering. No libstdc++ distributions are used anywhere; the bit stream and
// the derived doubles are identical on every platform.

inline uint64_t mix64(uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Derives a child seed from a parent seed and one or two stream indices.
inline uint64_t derive_seed(uint64_t seed, uint64_t a) {
    return mix64(seed ^ mix64(a + 0x632be59bd9b4e019ULL));
}

inline uint64_t derive_seed(uint64_t seed, uint64_t a, uint64_t b) {
    return derive_seed(derive_seed(seed, a), b);
}

class Rng {
public:
    explicit Rng(uint64_t seed) : state_(mix64(seed ^ 0x1905ULL)) {}

    Rng split(uint64_t stream) const { return Rng(derive_seed(state_, stream)); }

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 random bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform integer in [0, n). Rejection sampling, exact for any n > 0.
    uint64_t next_below(uint64_t n) {
        const uint64_t limit = ~uint64_t{0} - (~uint64_t{0} % n);
        uint64_t v = next_u64();
        while (v >= limit) v = next_u64();
        return v % n;
    }

    // Standard normal via Box-Muller. Consumes exactly two uniforms per call
    // (no cached spare), so the stream replays exactly.
    double next_gauss() {
        const double u1 = next_double();
        const double u2 = next_double();
        const double r = std::sqrt(-2.0 * std::log1p(-u1));
        return r * std::cos(6.283185307179586476925286766559 * u2);
    }

private:
    uint64_t state_;
};

}  // namespace bioaug

#endif
