#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <iostream>
#include <sstream>
#include <vector>

#include "rksample/pipeline.hpp"

using namespace rksample;

namespace {

SpectralBasis torus_basis(std::size_t M_max, int d = 1, double s = 1.0) {
    return enumerate_spectrum(TorusMixedSobolev{d, s}, M_max);
}

NodeSet equispaced_nodes(std::size_t n) {
    NodeSet ns;
    ns.dim = 1;
    ns.n = n;
    ns.nodes.resize(n);
    ns.density_values.assign(n, 1.0);
    for (std::size_t i = 0; i < n; ++i) ns.nodes[i] = static_cast<double>(i) / static_cast<double>(n);
    return ns;
}

CVec sample_basis_function(const SpectralBasis& basis, const NodeSet& ns, std::size_t k) {
    CVec f(ns.n);
    for (std::size_t i = 0; i < ns.n; ++i) f(i) = basis.eval(k, ns.node(i));
    return f;
}

} // namespace

TEST(Aliasing, EquispacedRecoveryHitsCongruentFrequenciesOnly) {
    const SpectralBasis basis = torus_basis(130);
    const NodeSet ns = equispaced_nodes(16);
    const RecoveryOperator op(basis, ns, 2);

    // freq(k=32) = -16 == 0 mod 16: aliases onto the constant; freq(k=5) = -3 does not
    ASSERT_EQ(basis.labels()[31][0], -16);
    const CVec hit = op.apply(sample_basis_function(basis, ns, 32));
    ASSERT_EQ(hit.size(), 1);
    EXPECT_NEAR(std::abs(hit(0) - Complex(1.0, 0.0)), 0.0, 1e-12);
    const CVec miss = op.apply(sample_basis_function(basis, ns, 5));
    EXPECT_NEAR(std::abs(miss(0)), 0.0, 1e-12);
}

TEST(Aliasing, TruncatedWorstCaseIsMaxOfBlockAndSpectralGap) {
    const SpectralBasis basis = torus_basis(130);
    const NodeSet ns = equispaced_nodes(16);
    const RecoveryOperator op(basis, ns, 2);
    const std::size_t M_trunc = 100;
    const ErrorReport rep = worst_case_error(op, M_trunc);

    // aliased block: b_k = sigma_k for freq(k) == 0 mod 16; its top eigenvalue
    // mu solves sum sigma_k^2/(mu - sigma_k^2) = 1 (rank-one update secular eq)
    std::vector<double> al;
    for (std::size_t k = 2; k <= M_trunc; ++k)
        if (basis.labels()[k - 1][0] % 16 == 0) al.push_back(basis.lambda(k));
    ASSERT_EQ(al.size(), 6u); // freqs -16,16,-32,32,-48,48
    double lo = *std::max_element(al.begin(), al.end());
    double hi = lo;
    for (double v : al) hi += v;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        double s = 0.0;
        for (double v : al) s += v / (mid - v);
        (s > 1.0 ? lo : hi) = mid;
    }
    const double mu = 0.5 * (lo + hi);

    // the aliased block loses to the untouched sigma_2 direction here
    EXPECT_LT(mu, basis.lambda(2));
    EXPECT_NEAR(rep.wce_truncated, std::max(basis.sigma(2), std::sqrt(mu)), 1e-10);
    EXPECT_NEAR(rep.wce_truncated, basis.sigma(2), 1e-10);
    EXPECT_GT(rep.tail_certificate, 0.0);
    EXPECT_DOUBLE_EQ(rep.wce, rep.wce_truncated + rep.tail_certificate);
}

TEST(WorstCaseError, LanczosMatchesDenseSplit) {
    const SpectralBasis basis = torus_basis(130);
    const NodeSet ns = equispaced_nodes(16);
    const RecoveryOperator op(basis, ns, 2);
    for (std::size_t M_trunc : {20u, 60u, 129u}) {
        const ErrorReport rep = worst_case_error(op, M_trunc);
        const double dense = worst_case_error_split_dense(op, M_trunc);
        ASSERT_NEAR(rep.wce_truncated, dense, 1e-8 * dense);
    }

    const SpectralBasis leg = enumerate_spectrum(LegendreSpectrum::geometric(0.75, 64), 64);
    const SamplingDensity density = make_density(leg, 3);
    const NodeSet drawn = draw_nodes(density, 40, 7u);
    const RecoveryOperator lop(leg, drawn, 3);
    const ErrorReport lrep = worst_case_error(lop, 32);
    const double ldense = worst_case_error_split_dense(lop, 32);
    EXPECT_NEAR(lrep.wce_truncated, ldense, 1e-8 * ldense);
}

TEST(WorstCaseError, TruncationDomainEnforced) {
    const SpectralBasis basis = torus_basis(130);
    const NodeSet ns = equispaced_nodes(16);
    const RecoveryOperator op(basis, ns, 2);
    EXPECT_THROW(worst_case_error(op, 1), truncation_error);
    EXPECT_THROW(worst_case_error(op, basis.count() + 1), truncation_error);
    // torus: the additive certificate needs a retained eigenvalue beyond M
    EXPECT_THROW(worst_case_error(op, basis.count()), truncation_error);

    const SpectralBasis leg = enumerate_spectrum(LegendreSpectrum::geometric(0.5, 12), 12);
    const SamplingDensity density = make_density(leg, 2);
    const NodeSet drawn = draw_nodes(density, 24, 11u);
    const RecoveryOperator lop(leg, drawn, 2);
    // finite spectrum: M = count is legal and the certificate vanishes
    const ErrorReport rep = worst_case_error(lop, 12);
    EXPECT_DOUBLE_EQ(rep.tail_certificate, 0.0);
    EXPECT_DOUBLE_EQ(rep.wce, rep.wce_truncated);
}

TEST(PaperBound, TailSumAndEdgeCases) {
    const SpectralBasis basis = torus_basis(600);
    EXPECT_GT(paper_bound_rhs(basis, 16), 0.0);
    EXPECT_LT(paper_bound_rhs(basis, 32), paper_bound_rhs(basis, 16));
    EXPECT_THROW(paper_bound_rhs(basis, 1), range_error);
    // m/2 beyond a finite spectrum: the discarded tail is empty
    const SpectralBasis tiny = enumerate_spectrum(LegendreSpectrum::geometric(0.5, 3), 3);
    EXPECT_DOUBLE_EQ(paper_bound_rhs(tiny, 8), 0.0);
}

TEST(Experiment, SweepDominatesSigmaM) {
    const KernelModel torus = TorusMixedSobolev{1, 1.0};
    for (std::size_t m : {2u, 3u}) {
        const ErrorReport rep =
            run_recovery_experiment(torus, m, RecoveryMethod::RandomOnly, 2.0, 101u + m);
        ASSERT_GE(rep.wce, rep.sigma_m - 1e-9);
        ASSERT_EQ(rep.n_used, rep.n_drawn);
        ASSERT_EQ(rep.n_drawn, smallest_n(m, 40.0));
    }
    const KernelModel leg = LegendreSpectrum::geometric(0.75, 256);
    for (std::size_t m : {2u, 4u}) {
        const ErrorReport rep =
            run_recovery_experiment(leg, m, RecoveryMethod::RandomOnly, 2.0, 202u + m);
        ASSERT_GE(rep.wce, rep.sigma_m - 1e-9);
    }
}

TEST(Experiment, DeterministicForFixedSeed) {
    const KernelModel torus = TorusMixedSobolev{1, 1.0};
    const ErrorReport a = run_recovery_experiment(torus, 2, RecoveryMethod::RandomOnly, 2.0, 99u);
    const ErrorReport b = run_recovery_experiment(torus, 2, RecoveryMethod::RandomOnly, 2.0, 99u);
    EXPECT_EQ(a.wce, b.wce);
    EXPECT_EQ(a.wce_truncated, b.wce_truncated);
    EXPECT_EQ(a.tail_certificate, b.tail_certificate);
    EXPECT_EQ(a.n_used, b.n_used);
    EXPECT_EQ(a.retries, b.retries);
    const ErrorReport c = run_recovery_experiment(torus, 2, RecoveryMethod::RandomOnly, 2.0, 100u);
    EXPECT_NE(a.wce, c.wce);
}

TEST(Experiment, SubsampleKeepsFewNodesAndHonestError) {
    const KernelModel torus = TorusMixedSobolev{1, 1.0};
    const std::size_t m = 8;
    const ErrorReport rts =
        run_recovery_experiment(torus, m, RecoveryMethod::RandomThenSubsample, 2.0, 31u);
    EXPECT_EQ(rts.method, RecoveryMethod::RandomThenSubsample);
    EXPECT_LE(rts.n_used, 8 * m);
    EXPECT_GE(rts.n_used, m - 1);
    EXPECT_LT(rts.n_used, rts.n_drawn);
    EXPECT_GE(rts.wce, rts.sigma_m - 1e-9);
    EXPECT_LE(rts.wce * rts.wce, rts.bound_rhs);

    const ErrorReport ro = run_recovery_experiment(torus, m, RecoveryMethod::RandomOnly, 2.0, 31u);
    EXPECT_LE(rts.wce, 10.0 * ro.wce); // few nodes cost a modest constant, not the rate
    EXPECT_LE(ro.wce * ro.wce, ro.bound_rhs);
}

TEST(Experiment, ArgumentValidation) {
    const KernelModel torus = TorusMixedSobolev{1, 1.0};
    EXPECT_THROW(run_recovery_experiment(torus, 1, RecoveryMethod::RandomOnly, 2.0, 1u),
                 range_error);
    const KernelModel tiny = LegendreSpectrum::geometric(0.5, 4);
    EXPECT_THROW(run_recovery_experiment(tiny, 6, RecoveryMethod::RandomOnly, 2.0, 1u),
                 range_error);
}

TEST(FitRate, ExactPowerLawRecovered) {
    std::vector<ErrorReport> reports;
    for (std::size_t n = 8; n <= 512; n *= 2) {
        ErrorReport r;
        r.n_used = n;
        r.wce = 3.0 / static_cast<double>(n);
        reports.push_back(r);
    }
    const RateFit fit = fit_rate(reports, 1.0, 1);
    EXPECT_NEAR(fit.slope, -1.0, 1e-12);
    EXPECT_NEAR(fit.intercept, std::log(3.0), 1e-12);
    EXPECT_LT(fit.rms_residual, 1e-12);
    EXPECT_LT(fit.max_residual, 1e-12);
}

TEST(FitRate, LogFactorShowsUpInDiagnosticFit) {
    std::vector<ErrorReport> reports;
    for (std::size_t n = 64; n <= 4096; n *= 2) {
        ErrorReport r;
        r.n_used = n;
        const double nn = static_cast<double>(n);
        r.wce = std::sqrt(std::log(nn)) / nn;
        reports.push_back(r);
    }
    const RateFit fit = fit_rate(reports, 1.0, 1);
    EXPECT_GE(fit.slope, -1.15);
    EXPECT_LE(fit.slope, -0.85);
    // the three-term fit resolves the log factor exactly
    EXPECT_NEAR(fit.slope_with_loglog, -1.0, 1e-8);
    EXPECT_NEAR(fit.loglog_coefficient, 0.5, 1e-8);
}

TEST(FitRate, RejectsDegenerateGrids) {
    std::vector<ErrorReport> reports(4);
    for (std::size_t i = 0; i < 4; ++i) {
        reports[i].n_used = 10 * (i + 1);
        reports[i].wce = 0.1;
    }
    EXPECT_THROW(fit_rate(reports, 1.0, 1), experiment_error); // too few

    std::vector<ErrorReport> narrow(6);
    for (std::size_t i = 0; i < 6; ++i) {
        narrow[i].n_used = 100 + i;
        narrow[i].wce = 0.1;
    }
    EXPECT_THROW(fit_rate(narrow, 1.0, 1), experiment_error); // under two octaves

    std::vector<ErrorReport> zero(6);
    for (std::size_t i = 0; i < 6; ++i) {
        zero[i].n_used = 8 << i;
        zero[i].wce = i == 3 ? 0.0 : 0.1;
    }
    EXPECT_THROW(fit_rate(zero, 1.0, 1), experiment_error); // nonpositive wce
}

TEST(Reports, CsvGoldenRow) {
    ErrorReport r;
    r.m = 3;
    r.n_drawn = 10;
    r.n_used = 7;
    r.wce = 0.5;
    r.sigma_m = 0.25;
    r.bound_rhs = 0.75;
    r.retries = 1;
    r.seed = 9;
    r.method = RecoveryMethod::RandomThenSubsample;
    std::ostringstream os;
    write_results_csv({r}, os);
    EXPECT_EQ(os.str(), "m,n_drawn,n_used,wce,sigma_m,bound_rhs,retries,seed,method\n"
                        "3,10,7,0.5,0.25,0.75,1,9,RandomThenSubsample\n");
}

TEST(Reports, MethodNamesRoundTrip) {
    EXPECT_EQ(recovery_method_from_string(to_string(RecoveryMethod::RandomOnly)),
              RecoveryMethod::RandomOnly);
    EXPECT_EQ(recovery_method_from_string(to_string(RecoveryMethod::RandomThenSubsample)),
              RecoveryMethod::RandomThenSubsample);
    EXPECT_THROW(recovery_method_from_string("Sobol"), range_error);
}

TEST(Reports, RateSvgSmoke) {
    ErrorReport r;
    r.n_used = 100;
    r.wce = 0.125;
    r.sigma_m = 0.0625;
    std::ostringstream os;
    write_rate_svg({r}, os);
    const std::string svg = os.str();
    EXPECT_NE(svg.find("<svg"), std::string::npos);
    EXPECT_NE(svg.find("</svg>"), std::string::npos);
    EXPECT_THROW(write_rate_svg({}, std::cout), experiment_error);
}

TEST(DefaultTruncation, CapsAndSigmaRule) {
    const SpectralBasis torus = torus_basis(300);
    EXPECT_EQ(default_truncation(torus, 4), 256u); // polynomial decay hits the 64 m cap
    const SpectralBasis leg = enumerate_spectrum(LegendreSpectrum::geometric(0.5, 200), 200);
    const std::size_t M = default_truncation(leg, 2);
    EXPECT_LT(M, 128u); // geometric decay reaches the 1e-6 sigma rule early
    EXPECT_LE(leg.sigma(M + 1), 1e-6 * leg.sigma(2));
    EXPECT_GT(leg.sigma(M), 1e-6 * leg.sigma(2));
}
