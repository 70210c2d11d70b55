#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace lpr {

// Deterministic 64-bit generator used everywhere in this library. The exact
// recipe is spelled out so an independent implementation can reproduce every
// stream bit for bit:
//
//   state advance:  state += 0x9E3779B97F4A7C15
//   output scramble (splitmix64 finalizer):
//     z  = state
//     z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9
//     z ^= z >> 27;  z *= 0x94D049BB133111EB
//     z ^= z >> 31
//   uniform double in [0, 1):  (z >> 11) * 2^-53
//   normals: Box-Muller on a pair of uniforms, u1 mapped to (0, 1] as
//     ((z >> 11) + 1) * 2^-53 and u2 in [0, 1);
//     r = sqrt(-2 ln u1), returns r*cos(2*pi*u2) first and caches
//     r*sin(2*pi*u2) for the next call.
//   integers below n:  next_u64() % n  (modulo bias < n / 2^64, irrelevant at
//     the scales used here)
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53-bit resolution.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double next_uniform(double lo, double hi) {
        return lo + (hi - lo) * next_double();
    }

    // Uniform in [0, n). n must be positive.
    std::uint64_t next_below(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("SplitMix64::next_below: n must be positive");
        return next_u64() % n;
    }

    // Standard normal via Box-Muller; values come in deterministic pairs.
    double next_normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
        const double u2 = next_double();                                            // [0, 1)
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double t = 2.0 * 3.14159265358979323846 * u2;
        cached_ = r * std::sin(t);
        has_cached_ = true;
        return r * std::cos(t);
    }

private:
    std::uint64_t state_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

// Scrambles a (seed, tag) pair into an independent stream seed. Different tags
// give statistically unrelated SplitMix64 streams for the same run seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
    auto scramble = [](std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    };
    return scramble(seed + 0x9E3779B97F4A7C15ULL * (tag + 1));
}

}  // namespace lpr
