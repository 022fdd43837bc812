#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace duplexrag {

// ─── Deterministic RNG ───────────────────────────────────────────────────────
//
// All randomness in a run flows through Rng streams derived from the global
// seed. std::mt19937_64 output is fully specified by the standard, and the
// [0,1) conversion below avoids std::uniform_real_distribution (whose draw
// sequence is implementation-defined), so identical seeds give identical
// streams on every platform.

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

class Rng {
  public:
    explicit Rng(uint64_t seed) : engine_(splitmix64(seed)) {}

    // Independent stream for (seed, label), e.g. ("<global>", "script7/latency").
    static Rng derive(uint64_t seed, std::string_view label) {
        return Rng(splitmix64(seed) ^ fnv1a64(label));
    }

    uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + uniform() * (hi - lo); }

    // Uniform integer in [0, n). n must be > 0.
    uint64_t below(uint64_t n) { return engine_() % n; }

    bool bernoulli(double p) { return uniform() < p; }

  private:
    std::mt19937_64 engine_;
};

} // namespace duplexrag
