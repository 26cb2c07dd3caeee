#pragma once

#include <cstdint>
#include <cstddef>

namespace snnwb {

// Deterministic xoshiro256** stream, seeded through splitmix64.
// The generator is fully specified here so the same seed and call sequence
// produce the same values on every platform; nothing from <random> is used.
class Rng {
public:
    static constexpr const char* kAlgorithm = "xoshiro256**";

    explicit Rng(uint64_t seed);

    uint64_t seed() const { return seed_; }

    uint64_t next_u64();

    // Uniform in [0,1) with 24 bits of mantissa.
    float next_float();

    // Uniform in [0,1) with 53 bits of mantissa.
    double next_double();

    float uniform(float lo, float hi);

    // Standard normal via Box-Muller (two draws per call, no caching).
    float normal(float mean = 0.0f, float stddev = 1.0f);

    bool bernoulli(float p) { return next_float() < p; }

    // Unbiased integer in [0, n) (Lemire multiply-shift with rejection).
    uint64_t below(uint64_t n);

    // Stable seed derivation for per-item streams.
    static uint64_t mix(uint64_t a, uint64_t b);

private:
    uint64_t seed_;
    uint64_t s_[4];
};

uint64_t splitmix64(uint64_t& state);

}  // namespace snnwb
