#pragma once

// Deterministic, splittable randomness. xoshiro256** for the stream,
// SplitMix64 for seeding and substream derivation. Hand-rolled on purpose:
// std::uniform_*_distribution output is implementation-defined, and results
// here must be bit-stable across toolchains and independent of worker count.

#include <array>
#include <cmath>
#include <cstdint>

namespace qdds {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

class Rng {
  public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& w : s_) w = splitmix64(sm);
    }

    // Substream for (master seed, stream index); streams are decorrelated by
    // two SplitMix64 scrambles so adjacent indices share no structure.
    static Rng substream(std::uint64_t master, std::uint64_t index) {
        std::uint64_t sm = master;
        std::uint64_t a = splitmix64(sm);
        sm = a ^ (index * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL);
        return Rng(splitmix64(sm));
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform in [0,1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n); unbiased via rejection.
    std::uint32_t below(std::uint32_t n) {
        const std::uint64_t span = 0x100000000ULL;
        const std::uint64_t limit = span - span % n;
        for (;;) {
            std::uint64_t x = next_u64() >> 32;
            if (x < limit) return static_cast<std::uint32_t>(x % n);
        }
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Box-Muller; one value per call, spare cached.
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1, u2;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

  private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }
    std::array<std::uint64_t, 4> s_{};
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace qdds
