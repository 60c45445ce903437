#pragma once

// Deterministic randomness for the whole toolkit.
//
// Every stochastic operation takes an explicit 64-bit seed and draws from a
// single generator algorithm: std::mt19937_64, whose output sequence for a
// given seed is fixed by the C++ standard and therefore identical on every
// platform. The standard *distributions* are not portable, so the bounded
// and real-valued mappings below are pinned here instead. Changing any of
// them is a breaking change to the reproducibility contract.

#include <cstdint>
#include <random>

namespace faceaudit {

// SplitMix64 finalizer. Used to derive independent sub-seeds (e.g. one per
// consistency segment) from a user seed and an index.
inline constexpr std::uint64_t hash64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Unbiased integer in [0, bound). Lemire's multiply-shift with rejection.
    std::uint64_t below(std::uint64_t bound) {
        unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * bound;
        auto lo = static_cast<std::uint64_t>(m);
        if (lo < bound) {
            const std::uint64_t cutoff = (0 - bound) % bound;
            while (lo < cutoff) {
                m = static_cast<unsigned __int128>(next_u64()) * bound;
                lo = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    // Uniform double in [0, 1) with 53 random bits.
    double real53() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

private:
    std::mt19937_64 engine_;
};

}  // namespace faceaudit
