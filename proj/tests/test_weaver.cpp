#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <sstream>
#include <vector>

#include "rksample/rng.hpp"
#include "rksample/weaver.hpp"

using namespace rksample;

namespace {

constexpr double pi = std::numbers::pi;

// rows (1/sqrt(n)) (e^{2 pi i j k / n})_{k<m}: tight, equal norm m/n
FiniteFrame harmonic_frame(std::size_t n, std::size_t m) {
    CMat V(n, m);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = 0; k < m; ++k)
            V(j, k) = std::polar(1.0 / std::sqrt(static_cast<double>(n)),
                                 2.0 * pi * static_cast<double>(j * k) / static_cast<double>(n));
    return make_frame(std::move(V));
}

// random isometry rows: tight with alpha = beta = 1, uneven row norms
FiniteFrame random_tight_frame(std::size_t n, std::size_t m, uint64_t seed) {
    RngStream rng(seed, 0u);
    CMat G(n, m);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) G(i, j) = Complex(rng.gaussian(), rng.gaussian());
    Eigen::HouseholderQR<CMat> qr(G);
    CMat Q = qr.householderQ() * CMat::Identity(n, m);
    return make_frame(std::move(Q));
}

FiniteFrame duplicated_onb(std::size_t m) {
    CMat V = CMat::Zero(2 * m, m);
    for (std::size_t j = 0; j < m; ++j) {
        V(2 * j, j) = Complex(1.0 / std::sqrt(2.0), 0.0);
        V(2 * j + 1, j) = Complex(1.0 / std::sqrt(2.0), 0.0);
    }
    return make_frame(std::move(V));
}

} // namespace

TEST(GammaProduct, CertifiedValue) {
    const GammaProduct g = gamma_product(1e-10);
    EXPECT_NEAR(g.value, 35.2098303315956, 1e-9);
    EXPECT_LT(g.value + g.remainder, 35.21);
    EXPECT_GT(g.remainder, 0.0);
}

TEST(GammaProduct, PartialProductsIncreaseToLimit) {
    // recompute the partial products: q_l = 2^{-1-l/2}, factor (1+q)/(1-q) > 1
    // (strict growth only while q is well above machine epsilon)
    double q = 0.5, partial = 1.0, prev = 0.0;
    for (int l = 0; l < 200; ++l) {
        partial *= (1.0 + q) / (1.0 - q);
        if (l < 80)
            EXPECT_GT(partial, prev);
        else
            EXPECT_GE(partial, prev);
        prev = partial;
        q *= std::sqrt(0.5);
    }
    EXPECT_NEAR(partial, 35.2098303315956, 1e-9);
    // the first factor is (1+1/2)/(1-1/2) = 3
    EXPECT_DOUBLE_EQ((1.0 + 0.5) / (1.0 - 0.5), 3.0);
    // tightening the tolerance can only grow the certified value
    EXPECT_LE(gamma_product(1e-3).value, gamma_product(1e-10).value);
    EXPECT_THROW(gamma_product(0.0), range_error);
}

TEST(ConstantBudget, PublishedTriples) {
    const ConstantBudget a = constant_budget(2.0, 0.5, 1.5, 188.0);
    EXPECT_EQ(a.regime, Regime::Large);
    EXPECT_DOUBLE_EQ(a.c1, 6568.0);
    EXPECT_NEAR(a.c2, 2.0 * std::pow(2.0 + std::sqrt(2.0), 2), 1e-12);
    EXPECT_DOUBLE_EQ(a.c3, 9852.0);

    const ConstantBudget b = constant_budget(1.0, 1.0, 1.0, 100.0);
    EXPECT_EQ(b.regime, Regime::Large);
    EXPECT_DOUBLE_EQ(b.c1, 1642.0);
    EXPECT_NEAR(b.c2, std::pow(2.0 + std::sqrt(2.0), 2), 1e-12);
    EXPECT_DOUBLE_EQ(b.c3, 1642.0);

    const ConstantBudget c = constant_budget(1.0, 1.0, 1.0, 10.0);
    EXPECT_EQ(c.regime, Regime::Small);
    EXPECT_DOUBLE_EQ(c.c1, 47.0);
    EXPECT_DOUBLE_EQ(c.c2, 1.0);
    EXPECT_DOUBLE_EQ(c.c3, 47.0);

    EXPECT_THROW(constant_budget(0.0, 1.0, 1.0, 2.0), precondition_error);
    EXPECT_THROW(constant_budget(1.0, 1.0, 1.0, 0.5), precondition_error);
}

TEST(AlphaBetaRecursion, TerminatesImmediatelyNearThreshold) {
    const double zz = 2.0 * zeta_weaver;
    const double delta = 0.999 / (zz * zz);
    const AlphaBetaSchedule s = alpha_beta_recursion(delta, 1.0, 1.0);
    EXPECT_EQ(s.L, 0u);
    ASSERT_EQ(s.alphas.size(), 2u);
    EXPECT_NEAR(s.alphas[1], 0.5 * (1.0 - zeta_weaver * std::sqrt(delta)), 1e-15);
}

TEST(AlphaBetaRecursion, DeepScheduleForSmallDelta) {
    const AlphaBetaSchedule s = alpha_beta_recursion(1.0 / 4096.0, 1.0, 1.0);
    EXPECT_GE(s.L, 5u);
}

TEST(AlphaBetaRecursion, RandomizedInvariants) {
    const double zz = 2.0 * zeta_weaver;
    RngStream rng(2718u, 0u);
    const GammaProduct g = gamma_product(1e-9);
    for (int trial = 0; trial < 100; ++trial) {
        const double k2 = std::exp(rng.uniform(-2.0, 2.0));
        const double k3 = k2 * std::exp(rng.uniform(0.0, 2.0));
        const double delta = rng.uniform(1e-6, 0.999) * k2 / (zz * zz);
        const AlphaBetaSchedule s = alpha_beta_recursion(delta, k2, k3);
        ASSERT_EQ(s.alphas.size(), s.L + 2);
        ASSERT_EQ(s.betas.size(), s.L + 2);
        for (std::size_t l = 0; l + 1 < s.alphas.size(); ++l) {
            // halving bracket alpha_{l+1} in [alpha_l/4, alpha_l/2)
            ASSERT_GE(s.alphas[l + 1], 0.25 * s.alphas[l] * (1.0 - 1e-12));
            ASSERT_LT(s.alphas[l + 1], 0.5 * s.alphas[l]);
            // idealized phi_l = beta_l 2^l non-decreasing
            ASSERT_GE(2.0 * s.betas[l + 1], s.betas[l] * (1.0 - 1e-12));
        }
        const double aL1 = s.alphas.back();
        ASSERT_GE(aL1, zeta_weaver * zeta_weaver * delta * (1.0 - 1e-12));
        ASSERT_LT(aL1, zz * zz * delta);
        ASSERT_LE(s.betas.back() / aL1, 35.21 * k3 / k2 * (1.0 + 1e-12));
        (void)g;
    }
    EXPECT_THROW(alpha_beta_recursion(1.0 / (zz * zz), 1.0, 1.0), precondition_error);
}

TEST(MakeFrame, HarmonicFrameIsTight) {
    const FiniteFrame f = harmonic_frame(24, 3);
    EXPECT_NEAR(f.alpha, 1.0, 1e-12);
    EXPECT_NEAR(f.beta, 1.0, 1e-12);
    EXPECT_NEAR(f.norm_bound, 3.0 / 24.0, 1e-12);
}

TEST(BruteForce, DuplicatedBasisSplitsIntoHalves) {
    const FiniteFrame f = duplicated_onb(3);
    const PartitionResult part = brute_force_partition(f);
    EXPECT_TRUE(part.feasible);
    EXPECT_EQ(part.S1, (std::vector<std::size_t>{0, 2, 4}));
    EXPECT_EQ(part.S2, (std::vector<std::size_t>{1, 3, 5}));
    EXPECT_NEAR(part.bounds1.first, 0.5, 1e-12);
    EXPECT_NEAR(part.bounds1.second, 0.5, 1e-12);
    EXPECT_NEAR(part.bounds2.first, 0.5, 1e-12);
    EXPECT_NEAR(part.bounds2.second, 0.5, 1e-12);
}

TEST(BruteForce, NontrivialScalarInstance) {
    // m = 1, n = 12, equal weights: eps = 1/12 < (2+sqrt 2)^{-2}, bounds bind
    const FiniteFrame f = harmonic_frame(12, 1);
    ASSERT_LT(f.norm_bound, weaver_trivial_threshold);
    const PartitionResult part = brute_force_partition(f);
    EXPECT_TRUE(part.feasible);
    EXPECT_GT(part.lower_bound, 0.0);
    EXPECT_LT(part.upper_bound, 1.0);
    EXPECT_EQ(part.S1, (std::vector<std::size_t>{0, 1, 2, 3, 4, 5}));
    EXPECT_NEAR(part.bounds1.second, 0.5, 1e-12);
    EXPECT_NEAR(part.bounds2.second, 0.5, 1e-12);
}

TEST(BruteForce, RandomTightFramesFeasibleWithVerifiedBounds) {
    for (uint64_t seed = 1; seed <= 50; ++seed) {
        const FiniteFrame f = random_tight_frame(12, 3, seed);
        const PartitionResult part = brute_force_partition(f);
        ASSERT_TRUE(part.feasible);
        // recompute each class's extremal eigenvalues independently
        const auto b1 = subset_bounds(f, part.S1);
        const auto b2 = subset_bounds(f, part.S2);
        ASSERT_NEAR(part.bounds1.first, b1.first, 1e-10);
        ASSERT_NEAR(part.bounds1.second, b1.second, 1e-10);
        ASSERT_NEAR(part.bounds2.first, b2.first, 1e-10);
        ASSERT_NEAR(part.bounds2.second, b2.second, 1e-10);
        ASSERT_EQ(part.S1.size() + part.S2.size(), f.size());
    }
}

TEST(BruteForce, SizeCap) {
    const FiniteFrame f = harmonic_frame(25, 2);
    EXPECT_THROW(brute_force_partition(f), budget_error);
}

TEST(RecursiveHalving, DuplicatedBasisOneStep) {
    const FiniteFrame f = duplicated_onb(3);
    const SubsampleResult res = recursive_halving(f, 1.0, 1.0, 1.0, 3);
    EXPECT_EQ(res.J, (std::vector<std::size_t>{0, 2, 4}));
    EXPECT_NEAR(res.achieved_bounds.first, 0.5, 1e-12);
    EXPECT_NEAR(res.achieved_bounds.second, 0.5, 1e-12);
    EXPECT_TRUE(res.certified);
    EXPECT_FALSE(res.search_failure);
    EXPECT_EQ(res.budget.regime, Regime::Small);
}

TEST(RecursiveHalving, ScheduleBranchHalvesAtLeastOnce) {
    // delta = m/n = 1/64 below the schedule threshold: L = 0, one halving step
    const FiniteFrame f = harmonic_frame(128, 2);
    HalvingOptions opts;
    opts.seed = 5u;
    const SubsampleResult res = recursive_halving(f, 1.0, 1.0, 1.0, 2, opts);
    EXPECT_FALSE(res.search_failure);
    EXPECT_LE(res.J.size(), 64u); // #J <= 2^{-(L+1)} n
    EXPECT_TRUE(res.certified);
    const auto bounds = subset_bounds(f, res.J);
    EXPECT_NEAR(bounds.first, res.achieved_bounds.first, 1e-12);
    EXPECT_NEAR(bounds.second, res.achieved_bounds.second, 1e-12);
}

TEST(RecursiveHalving, PreconditionsEnforced) {
    const FiniteFrame f = harmonic_frame(16, 2);
    // k1 m/n below the actual row norms
    EXPECT_THROW(recursive_halving(f, 0.5, 1.0, 1.0, 2), precondition_error);
    // claimed alpha above the actual lower frame bound
    EXPECT_THROW(recursive_halving(f, 1.0, 2.0, 1.0, 2), precondition_error);
    EXPECT_THROW(recursive_halving(f, 1.0, 1.0, 0.5, 2), precondition_error);
    EXPECT_THROW(recursive_halving(f, 1.0, 1.0, 1.0, 0), range_error);
}

TEST(BarrierGreedy, OrthonormalBasisTakesEverything) {
    CMat V = CMat::Identity(6, 6);
    const FiniteFrame f = make_frame(std::move(V));
    const SubsampleResult res = barrier_greedy_subsample(f, 6);
    EXPECT_EQ(res.J.size(), 6u);
    EXPECT_NEAR(res.achieved_bounds.first, 1.0, 1e-12);
    EXPECT_NEAR(res.achieved_bounds.second, 1.0, 1e-12);
}

TEST(BarrierGreedy, RandomTightFrameCertifies) {
    for (uint64_t seed : {11u, 22u, 33u, 44u, 55u}) {
        const FiniteFrame f = random_tight_frame(200, 10, seed);
        const SubsampleResult res = barrier_greedy_subsample(f, 40);
        ASSERT_EQ(res.J.size(), 40u);
        ASSERT_GT(res.achieved_bounds.first, 0.0);
        ASSERT_TRUE(res.certified);
        ASSERT_FALSE(res.search_failure);
        // certification is an eigen-solve fact, re-check it independently
        const auto bounds = subset_bounds(f, res.J);
        const double n = static_cast<double>(f.size());
        ASSERT_GE(bounds.first, res.budget.c2 * 10.0 / n - 1e-12);
        ASSERT_LE(bounds.second, res.budget.c3 * 10.0 / n + 1e-12);
    }
}

TEST(BarrierGreedy, NestedPicksMonotoneLambdaMin) {
    const FiniteFrame f = harmonic_frame(100, 5);
    double prev = 0.0;
    for (std::size_t target = 10; target <= 40; target += 5) {
        const SubsampleResult res = barrier_greedy_subsample(f, target);
        EXPECT_EQ(res.J.size(), target);
        EXPECT_GE(res.achieved_bounds.first, prev - 1e-12);
        prev = res.achieved_bounds.first;
    }
}

TEST(BarrierGreedy, Preconditions) {
    const FiniteFrame f = harmonic_frame(16, 4);
    EXPECT_THROW(barrier_greedy_subsample(f, 3), range_error);
    CMat flat = CMat::Zero(8, 3);
    flat.col(0).setOnes(); // rank one: cannot span
    EXPECT_THROW(barrier_greedy_subsample(make_frame(std::move(flat)), 4), precondition_error);
}

TEST(RemarkChain, AllConstantsPinned) {
    const RemarkConstantChain r = remark_constant_chain();
    EXPECT_EQ(r.n_of_2, 497u);
    EXPECT_NEAR(r.kappa, 0.5 * (1.0 + std::sqrt(5.0)), 1e-15);
    EXPECT_GT(r.prob_sum, 1.0);
    EXPECT_NEAR(r.c1, 3.094427190999916, 1e-14);
    EXPECT_NEAR(r.c2, 2.0 * std::pow(2.0 + std::sqrt(2.0), 2), 1e-12);
    EXPECT_DOUBLE_EQ(r.C2, 9852.0);
    EXPECT_NEAR(r.c4, 6.318175927664965, 1e-13);
    EXPECT_NEAR(r.theta, 0.11147250927864481, 1e-15);
    EXPECT_NEAR(r.c5, 113.35845884426253, 1e-11);
    EXPECT_DOUBLE_EQ(r.c1_tilde, 6568.0);
    EXPECT_DOUBLE_EQ(r.c3_tilde, 9852.0);
    EXPECT_DOUBLE_EQ(r.two_c1_tilde, 13136.0);
    EXPECT_NEAR(r.big_C, 2.0 * r.c5 * 6568.0, 1e-6);
    EXPECT_LE(r.big_C, 1.5e6);
    EXPECT_GE(r.small_c, 3.8e-5);
    EXPECT_NEAR(r.small_c, 1.0 / 26272.0, 1e-20);
    EXPECT_TRUE(r.all_brackets_hold);
}

TEST(FrameCsv, RoundTripExact) {
    const FiniteFrame f = random_tight_frame(9, 4, 77u);
    std::ostringstream os;
    write_frame_csv(f, os);
    std::istringstream is(os.str());
    const FiniteFrame back = read_frame_csv(is);
    ASSERT_EQ(back.size(), f.size());
    ASSERT_EQ(back.dim(), f.dim());
    EXPECT_EQ(back.vectors, f.vectors); // format_double round-trips exactly
    EXPECT_NEAR(back.alpha, f.alpha, 1e-14);
}

TEST(FrameCsv, HeaderlessAndErrors) {
    std::istringstream plain("1,0,0,0\n0,0,1,0\n");
    const FiniteFrame f = read_frame_csv(plain);
    EXPECT_EQ(f.size(), 2u);
    EXPECT_EQ(f.dim(), 2u);
    EXPECT_NEAR(f.alpha, 1.0, 1e-14);

    std::istringstream empty("");
    EXPECT_THROW(read_frame_csv(empty), experiment_error);
    std::istringstream odd("1,0,0\n");
    EXPECT_THROW(read_frame_csv(odd), experiment_error);
    std::istringstream ragged("1,0,0,0\n1,0\n");
    EXPECT_THROW(read_frame_csv(ragged), experiment_error);
}
