#pragma once

// Deterministic, platform-independent random streams. std::uniform_*
// distributions are not pinned down by the standard, so everything here is
// spelled out: xoshiro256++ state expanded from a digest via splitmix64,
// doubles built by the 53-bit mantissa trick.

#include <array>
#include <cstdint>
#include <stdexcept>

#include "xlwm/sha256.hpp"

namespace xlwm {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

class Xoshiro256pp {
  public:
    explicit Xoshiro256pp(std::uint64_t seed) {
        for (auto& w : s_) w = splitmix64(seed);
    }

    std::uint64_t next_u64() {
        std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform in [0, 1 - 2^-53]; log(1 - u) is always finite.
    double next_uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Unbiased-enough bounded draw via 128-bit multiply-shift.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("below(0)");
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

  private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    std::array<std::uint64_t, 4> s_{};
};

// Folds a 256-bit digest into a 64-bit seed for the stream generator.
inline std::uint64_t fold_digest(const Digest256& d) {
    auto word = [&](int i) {
        std::uint64_t w = 0;
        for (int b = 7; b >= 0; --b) w = (w << 8) | d[8 * i + b];
        return w;
    };
    return word(0) ^ word(1) ^ word(2) ^ word(3);
}

inline Xoshiro256pp rng_from_digest(const Digest256& d) {
    return Xoshiro256pp(fold_digest(d));
}

}  // namespace xlwm
