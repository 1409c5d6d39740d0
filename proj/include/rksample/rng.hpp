#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace rksample {

/**
 * Philox4x32-10 counter-based generator.
 *
 * Splittable by construction: a (seed, stream) pair addresses a disjoint
 * 2^64 counter range, so parallel trials with distinct stream indices are
 * independent and reproducible regardless of scheduling.
 */
struct Philox4x32 {
    static constexpr uint32_t M0 = 0xD2511F53u;
    static constexpr uint32_t M1 = 0xCD9E8D57u;
    static constexpr uint32_t W0 = 0x9E3779B9u;
    static constexpr uint32_t W1 = 0xBB67AE85u;

    static std::array<uint32_t, 4> block(std::array<uint32_t, 4> ctr,
                                         std::array<uint32_t, 2> key) {
        for (int round = 0; round < 10; ++round) {
            const uint64_t p0 = static_cast<uint64_t>(M0) * ctr[0];
            const uint64_t p1 = static_cast<uint64_t>(M1) * ctr[2];
            const uint32_t hi0 = static_cast<uint32_t>(p0 >> 32);
            const uint32_t lo0 = static_cast<uint32_t>(p0);
            const uint32_t hi1 = static_cast<uint32_t>(p1 >> 32);
            const uint32_t lo1 = static_cast<uint32_t>(p1);
            ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
            key[0] += W0;
            key[1] += W1;
        }
        return ctr;
    }
};

/// One independent stream of the Philox generator.
class RngStream {
public:
    RngStream(uint64_t seed, uint64_t stream) : stream_(stream) {
        key_ = {static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32)};
    }

    uint64_t next_u64() {
        if (idx_ >= 4) refill();
        const uint64_t lo = buf_[idx_], hi = buf_[idx_ + 1];
        idx_ += 2;
        return lo | (hi << 32);
    }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double a, double b) { return a + (b - a) * uniform01(); }

    /// Unbiased-enough index in [0, n) via the multiply-shift reduction.
    uint64_t index(uint64_t n) {
        return static_cast<uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    /// Standard normal via Box-Muller; second variate cached.
    double gaussian() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        const double u1 = 1.0 - uniform01(); // (0, 1]
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double t = 2.0 * std::numbers::pi * u2;
        cached_ = r * std::sin(t);
        has_cached_ = true;
        return r * std::cos(t);
    }

private:
    void refill() {
        buf_ = Philox4x32::block({static_cast<uint32_t>(counter_),
                                  static_cast<uint32_t>(counter_ >> 32),
                                  static_cast<uint32_t>(stream_),
                                  static_cast<uint32_t>(stream_ >> 32)},
                                 key_);
        ++counter_;
        idx_ = 0;
    }

    std::array<uint32_t, 2> key_;
    uint64_t stream_ = 0;
    uint64_t counter_ = 0;
    std::array<uint32_t, 4> buf_{};
    int idx_ = 4;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

/// Independent child seed for trial/run indices; one Philox block, no state.
inline uint64_t derive_seed(uint64_t seed, uint64_t salt) {
    const auto out = Philox4x32::block(
        {static_cast<uint32_t>(salt), static_cast<uint32_t>(salt >> 32), 0x5eedu, 0u},
        {static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32)});
    return (static_cast<uint64_t>(out[1]) << 32) | out[0];
}

} // namespace rksample
