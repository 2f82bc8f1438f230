#pragma once

#include <cstdint>
#include <cmath>
#include <initializer_list>

namespace magnet {

// Counter-based deterministic RNG (splitmix64 stream). Every stochastic
// decision in the project draws from an Rng keyed by (seed, purpose, indices),
// so results are reproducible bit-for-bit regardless of thread schedule and
// resumable from a step counter alone.
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

struct Rng {
    uint64_t state = 0;

    Rng() = default;
    explicit Rng(uint64_t key) : state(mix64(key)) {}

    // Derive a stream key from a seed plus a chain of stream indices.
    static Rng derive(uint64_t seed, std::initializer_list<uint64_t> stream) {
        uint64_t k = mix64(seed);
        for (uint64_t s : stream) k = mix64(k ^ mix64(s ^ 0x5851f42d4c957f2dULL));
        Rng r;
        r.state = k;
        return r;
    }

    uint64_t next_u64() {
        state += 0x9e3779b97f4a7c15ULL;
        uint64_t z = state;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 random bits.
    double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

    float next_float() { return float(next_u64() >> 40) * 0x1.0p-24f; }

    // Unbiased uniform integer in [0, n).
    uint64_t next_below(uint64_t n) {
        uint64_t threshold = (-n) % n;
        for (;;) {
            uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // Box-Muller; always consumes exactly two draws.
    double next_normal() {
        double u1 = 1.0 - next_double();
        double u2 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }
};

// Fixed stream tags so call sites never collide by accident.
namespace rng_stream {
constexpr uint64_t kSplit = 1;
constexpr uint64_t kInit = 2;
constexpr uint64_t kShuffle = 3;
constexpr uint64_t kNegative = 4;
constexpr uint64_t kDropout = 5;
constexpr uint64_t kFanout = 6;
constexpr uint64_t kSynthEdges = 7;
constexpr uint64_t kSynthCentroid = 8;
constexpr uint64_t kSynthFeature = 9;
constexpr uint64_t kSynthTaste = 10;
}  // namespace rng_stream

}  // namespace magnet
