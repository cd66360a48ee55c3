#pragma once

#include <cmath>
#include <cstdint>

namespace amefu {

// xoshiro256** generator seeded through splitmix64. Chosen over std::mt19937
// because the standard distributions are not bit-reproducible across standard
// library implementations; everything here is our own arithmetic, so a seed
// produces the same stream on every platform.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& w : state_) w = splitmix64(x);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Unbiased integer in [0, n). n must be >= 1.
    std::uint64_t uniform_below(std::uint64_t n) {
        if (n <= 1) return 0;
        const std::uint64_t threshold = (0 - n) % n; // 2^64 mod n
        for (;;) {
            const std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // Uniform double in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Standard normal via Box-Muller. Draws two uniforms per call; no cached
    // state so draw counts stay predictable.
    double normal() {
        double u1 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        const double u2 = uniform01();
        const double two_pi = 6.283185307179586476925286766559;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    static std::uint64_t splitmix64(std::uint64_t& x) {
        std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

  private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t state_[4];
};

// Per-purpose stream tags. Streams are derived as seed ^ tag so each pipeline
// stage can be reseeded independently without disturbing the others.
namespace stream_tag {
inline constexpr std::uint64_t data_gen = 0xd47a6e1f00000001ULL;
inline constexpr std::uint64_t episode = 0xd47a6e1f00000002ULL;
inline constexpr std::uint64_t clip = 0xd47a6e1f00000003ULL;
inline constexpr std::uint64_t init = 0xd47a6e1f00000004ULL;
} // namespace stream_tag

inline Rng stream_for(std::uint64_t seed, std::uint64_t tag) { return Rng(seed ^ tag); }

// Indexed stream, e.g. one per episode: results do not depend on the order in
// which episodes are drawn, so evaluation may run them in parallel.
inline Rng stream_for(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) {
    std::uint64_t x = seed ^ tag;
    const std::uint64_t a = Rng::splitmix64(x);
    x ^= index * 0x2545f4914f6cdd1dULL + 0x9e3779b97f4a7c15ULL;
    const std::uint64_t b = Rng::splitmix64(x);
    return Rng(a ^ b);
}

} // namespace amefu
