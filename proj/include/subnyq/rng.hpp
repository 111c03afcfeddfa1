#pragma once

#include <cstdint>
#include <random>

namespace subnyq {

// splitmix64 finalizer (Steele/Lea/Flood). Used to derive well-mixed
// per-stream seeds from (master seed, stream index) pairs.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Seed-splitting rule (documented in the README): stream i of a master seed
// gets seed_i = splitmix64(master XOR splitmix64(i + 1)). Streams depend only
// on (master, i), never on thread identity or scheduling, so results are
// independent of the worker count.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    return splitmix64(master ^ splitmix64(index + 1));
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

inline double uniform(Rng& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double normal(Rng& rng, double mean, double stddev) {
    // One-shot construction keeps the distribution stateless across calls
    // (normal_distribution caches a spare deviate otherwise).
    return std::normal_distribution<double>(mean, stddev)(rng);
}

}  // namespace subnyq
