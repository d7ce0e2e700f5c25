#pragma once

#include <cstdint>

namespace rnnlab {

// splitmix64: 64-bit state advanced by a Weyl constant, output mixed with
// xor-shift-multiply. Deterministic for a given seed; streams are not
// portable across implementations and are not required to be.
struct SplitMix64 {
    std::uint64_t state;

    explicit SplitMix64(std::uint64_t seed) : state(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform double in [0, 1), 53 random bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Multiply-shift; bias is O(n / 2^64).
    std::uint64_t below(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next()) * n) >> 64);
    }
};

// Independent child seed for a salted substream (per training step, per run,
// per generator call). Derivation depends only on (base, salt) so resumed and
// uninterrupted runs see identical streams.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt) {
    SplitMix64 mix(base ^ (0xD1B54A32D192ED03ULL * (salt + 1)));
    return mix.next();
}

}  // namespace rnnlab
