#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

#include "rksample/rng.hpp"

using namespace rksample;

// Known-answer vectors for the 10-round philox4x32 block function.
TEST(Philox, KnownAnswerZeros) {
    const auto out = Philox4x32::block({0u, 0u, 0u, 0u}, {0u, 0u});
    EXPECT_EQ(out[0], 0x6627e8d5u);
    EXPECT_EQ(out[1], 0xe169c58du);
    EXPECT_EQ(out[2], 0xbc57ac4cu);
    EXPECT_EQ(out[3], 0x9b00dbd8u);
}

TEST(Philox, KnownAnswerOnes) {
    const uint32_t f = 0xffffffffu;
    const auto out = Philox4x32::block({f, f, f, f}, {f, f});
    EXPECT_EQ(out[0], 0x408f276du);
    EXPECT_EQ(out[1], 0x41c83b0eu);
    EXPECT_EQ(out[2], 0xa20bc7c6u);
    EXPECT_EQ(out[3], 0x6d5451fdu);
}

TEST(Philox, BlockIsPure) {
    const std::array<uint32_t, 4> ctr{3u, 1u, 4u, 1u};
    const std::array<uint32_t, 2> key{5u, 9u};
    EXPECT_EQ(Philox4x32::block(ctr, key), Philox4x32::block(ctr, key));
}

TEST(RngStream, DeterministicReplay) {
    RngStream a(12345u, 7u), b(12345u, 7u);
    for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
}

TEST(RngStream, StreamsDiffer) {
    RngStream a(12345u, 0u), b(12345u, 1u);
    int equal = 0;
    for (int i = 0; i < 256; ++i)
        if (a.next_u64() == b.next_u64()) ++equal;
    EXPECT_EQ(equal, 0);
}

TEST(RngStream, SeedsDiffer) {
    RngStream a(1u, 0u), b(2u, 0u);
    int equal = 0;
    for (int i = 0; i < 256; ++i)
        if (a.next_u64() == b.next_u64()) ++equal;
    EXPECT_EQ(equal, 0);
}

TEST(RngStream, Uniform01Range) {
    RngStream rng(99u, 0u);
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform01();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
    }
}

TEST(RngStream, Uniform01Moments) {
    RngStream rng(4242u, 0u);
    const int n = 200000;
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform01();
        sum += u;
        sumsq += u * u;
    }
    // mean 1/2 and second moment 1/3, each within 5 standard errors
    EXPECT_NEAR(sum / n, 0.5, 5.0 * std::sqrt(1.0 / 12.0 / n));
    EXPECT_NEAR(sumsq / n, 1.0 / 3.0, 5.0 * std::sqrt(4.0 / 45.0 / n));
}

TEST(RngStream, IndexBoundsAndCoverage) {
    RngStream rng(7u, 3u);
    std::set<uint64_t> seen;
    for (int i = 0; i < 2000; ++i) {
        const uint64_t k = rng.index(10);
        ASSERT_LT(k, 10u);
        seen.insert(k);
    }
    EXPECT_EQ(seen.size(), 10u);
}

TEST(RngStream, GaussianMoments) {
    RngStream rng(31337u, 0u);
    const int n = 200000;
    double sum = 0.0, sumsq = 0.0, sum4 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double g = rng.gaussian();
        sum += g;
        sumsq += g * g;
        sum4 += g * g * g * g;
    }
    EXPECT_NEAR(sum / n, 0.0, 5.0 / std::sqrt(static_cast<double>(n)));
    EXPECT_NEAR(sumsq / n, 1.0, 5.0 * std::sqrt(2.0 / n));
    EXPECT_NEAR(sum4 / n, 3.0, 5.0 * std::sqrt(96.0 / n));
}

TEST(DeriveSeed, StableAndSpreading) {
    EXPECT_EQ(derive_seed(1u, 2u), derive_seed(1u, 2u));
    std::set<uint64_t> children;
    for (uint64_t salt = 0; salt < 4096; ++salt) children.insert(derive_seed(42u, salt));
    EXPECT_EQ(children.size(), 4096u);
    EXPECT_NE(derive_seed(1u, 0u), derive_seed(2u, 0u));
}
