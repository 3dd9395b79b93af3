// SPDX-License-Identifier: Apache-2.0
// ------------------------------------------------------------------------
// Counter-based random streams.
//
// Every random quantity in a Monte Carlo run is addressed by the tuple
// (seed, stream tag, trial index, draw index). The generator is
// Philox4x32-10 (Salmon et al., "Parallel random numbers: as easy as
// 1, 2, 3", SC'11): key = seed, counter = (draw block, tag, trial lo, trial hi).
// Results therefore do not depend on how trials are distributed over
// worker threads, and any trial can be regenerated in isolation.
//
// Uniforms use 53 bits from two 32-bit words; Gaussians use Box-Muller.
// Neither goes through <random> distributions, so streams are identical
// across standard library implementations.

#pragma once

#include "common.hpp"

#include <array>
#include <cmath>
#include <cstdint>

namespace isacdet {

namespace detail {

inline std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                                  std::array<std::uint32_t, 2> key)
{
    constexpr std::uint32_t kMul0 = 0xD2511F53u;
    constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const auto lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const auto lo1 = static_cast<std::uint32_t>(p1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += kWeyl0;
        key[1] += kWeyl1;
    }
    return ctr;
}

} // namespace detail

/// Stream tags keep independent quantities of one trial apart.
enum class StreamTag : std::uint32_t {
    Symbols = 1,
    Noise = 2,
    Rcs = 3,
    CommChannel = 4,
    NullNoise = 5,
    Instance = 6,
};

/// One sequential stream of draws for a fixed (seed, tag, trial).
class RngStream {
  public:
    RngStream(std::uint64_t seed, StreamTag tag, std::uint64_t trial)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          tag_(static_cast<std::uint32_t>(tag)), trial_(trial)
    {
    }

    std::uint32_t next_u32()
    {
        if (pos_ == 4) {
            block_ = detail::philox4x32_10({static_cast<std::uint32_t>(counter_), tag_,
                                            static_cast<std::uint32_t>(trial_),
                                            static_cast<std::uint32_t>(trial_ >> 32)},
                                           key_);
            ++counter_;
            pos_ = 0;
        }
        return block_[pos_++];
    }

    /// Uniform on (0, 1); never returns 0 so it is safe under log().
    double uniform()
    {
        const std::uint64_t hi = next_u32() >> 5;
        const std::uint64_t lo = next_u32() >> 6;
        const double u = static_cast<double>((hi << 26) | lo) * 0x1.0p-53;
        return u + 0x1.0p-54;
    }

    double normal()
    {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        spare_ = radius * std::sin(2.0 * kPi * u2);
        has_spare_ = true;
        return radius * std::cos(2.0 * kPi * u2);
    }

    /// Circularly symmetric complex Gaussian with E|z|^2 = variance.
    cplx complex_normal(double variance)
    {
        const double s = std::sqrt(0.5 * variance);
        const double re = normal();
        const double im = normal();
        return {s * re, s * im};
    }

  private:
    std::array<std::uint32_t, 2> key_;
    std::uint32_t tag_;
    std::uint64_t trial_;
    std::uint64_t counter_ = 0;
    std::array<std::uint32_t, 4> block_{};
    int pos_ = 4;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// Factory for per-trial streams under one experiment seed.
struct TrialRng {
    std::uint64_t seed = 0;

    RngStream stream(StreamTag tag, std::uint64_t trial) const { return {seed, tag, trial}; }
};

} // namespace isacdet
