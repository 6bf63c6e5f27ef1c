#pragma once

#include <complex>
#include <cstdint>

namespace spincal {

/// SplitMix64 in counter mode: the i-th draw of stream (seed, stream) is
/// mix(key + (i + 1) * 0x9E3779B97F4A7C15) with key = mix(seed ^ mix(stream)).
/// The finalizer is the one published with SplitMix64 (Steele, Lea, Flood 2014),
/// so any implementation can reproduce the sequence bit for bit.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0);

    static std::uint64_t mix(std::uint64_t z);

    std::uint64_t next_u64();
    /// Uniform on [0, 1) with 53 random bits.
    double uniform();
    /// Uniform on (lo, hi).
    double uniform(double lo, double hi);
    /// Standard normal, Box-Muller (two uniforms per draw, no caching).
    double normal();
    /// Complex normal with E|z|^2 = 1.
    std::complex<double> complex_normal();

    std::uint64_t counter() const { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

} // namespace spincal
