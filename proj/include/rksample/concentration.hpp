#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "rksample/density.hpp"
#include "rksample/errors.hpp"
#include "rksample/leastsq.hpp"
#include "rksample/linalg.hpp"
#include "rksample/parallel.hpp"
#include "rksample/rng.hpp"
#include "rksample/spectrum.hpp"

namespace rksample {

inline constexpr double kappa_golden = 1.618033988749894848; ///< (1+sqrt(5))/2

struct FrameCertificate {
    std::size_t m = 2;
    std::size_t n = 0;
    double r = 2.0;
    double eigen_min = 0.0;
    double eigen_max = 0.0;
    bool passed = false;       ///< eigenvalues in (1/2, 3/2)
    bool condition_ok = false; ///< N(m) <= n/(10 r log n)
};

struct TailDeviationReport {
    std::size_t m = 2;
    std::size_t n = 0;
    std::size_t M_trunc = 2;
    double deviation = 0.0; ///< ||(1/n) Phi* Phi - Lambda|| on the truncated block
    double bound_F = 0.0;
    double kappa = kappa_golden;
    double truncation_uncertainty = 0.0; ///< certified bound on the discarded tail's norm contribution
    bool truncation_certified = false;   ///< uncertainty <= 1e-10
};

/// N(m) <= n/(10 r log n), natural logarithm.
inline bool check_condition(std::size_t m, std::size_t n, double r, double N_of_m) {
    if (n < m || m < 2) throw range_error("check_condition: need n >= m >= 2");
    if (!(r > 1.0)) throw range_error("check_condition: need r > 1");
    return N_of_m <= static_cast<double>(n) / (10.0 * r * std::log(static_cast<double>(n)));
}

/// Minimal n >= 3 with m <= n/(factor log n), upward scan from an underestimate.
inline std::size_t smallest_n(std::size_t m, double factor = 40.0) {
    if (m < 2) throw range_error("smallest_n: m >= 2 required");
    if (!(factor > 0.0)) throw range_error("smallest_n: factor > 0 required");
    const double fm = factor * static_cast<double>(m);
    // n/log n is increasing for n >= 3 and fm*log(fm)/log(fm*log(fm)) < fm,
    // so fm*log(fm) sits below the crossing point.
    std::size_t n = 3;
    if (fm > 3.0) {
        const double guess = fm * std::log(fm);
        if (guess > 3.0) n = static_cast<std::size_t>(guess);
    }
    while (static_cast<double>(m) > static_cast<double>(n) / (factor * std::log(static_cast<double>(n))))
        ++n;
    return n;
}

/// Extremal eigenvalues of H_m = (1/n) L~* L~ and the Thm-style pass flags.
inline FrameCertificate certify_frame(const FrameMatrix& L, const SpectralBasis& basis,
                                      double r = 2.0) {
    FrameCertificate cert;
    cert.m = L.m;
    cert.n = static_cast<std::size_t>(L.entries.rows());
    cert.r = r;
    const CMat H = (L.entries.adjoint() * L.entries) / static_cast<double>(cert.n);
    const auto [lo, hi] = hermitian_extremal_eigs(H);
    cert.eigen_min = lo;
    cert.eigen_max = hi;
    cert.passed = lo > 0.5 && hi < 1.5;
    cert.condition_ok = check_condition(cert.m, cert.n, r, spectral_function_N(basis, cert.m));
    return cert;
}

/**
 * Same certificate without materializing L~: H accumulated block-wise from
 * node evaluations. Used when n is large and only the certificate is needed.
 */
inline FrameCertificate certify_frame_streamed(const SpectralBasis& basis, const NodeSet& nodes,
                                               std::size_t m, double r = 2.0) {
    if (m < 2 || m - 1 > basis.count()) throw range_error("certify_frame_streamed: m out of range");
    if (nodes.n < m - 1) throw range_error("certify_frame_streamed: fewer nodes than columns");
    CMat H = CMat::Zero(m - 1, m - 1);
    std::vector<Complex> row(m - 1);
    CVec y(m - 1);
    for (std::size_t j = 0; j < nodes.n; ++j) {
        const double rho = nodes.density_values[j];
        if (rho == 0.0) continue;
        basis.eval_row(nodes.node(j), 1, m - 1, row.data());
        const double w = 1.0 / std::sqrt(rho);
        for (std::size_t l = 0; l < m - 1; ++l) y(l) = w * row[l];
        H.selfadjointView<Eigen::Lower>().rankUpdate(y, 1.0);
    }
    H = H.selfadjointView<Eigen::Lower>();
    H /= static_cast<double>(nodes.n);
    FrameCertificate cert;
    cert.m = m;
    cert.n = nodes.n;
    cert.r = r;
    const auto [lo, hi] = hermitian_extremal_eigs(H);
    cert.eigen_min = lo;
    cert.eigen_max = hi;
    cert.passed = lo > 0.5 && hi < 1.5;
    cert.condition_ok = check_condition(m, nodes.n, r, spectral_function_N(basis, m));
    return cert;
}

/**
 * Certified bound on sup_x sum_{k>M} sigma_k^2 |eta_k(x)|^2 / rho_m(x), the
 * weighted mass of the discarded block. Torus: |eta| == 1, rho == 1. Legendre:
 * sup |eta_k|^2 = 2k-1 <= 2 count - 1 and rho_m >= 1/(2(m-1)).
 */
inline double discarded_tail_mass(const SpectralBasis& basis, std::size_t m, std::size_t M_trunc) {
    const double beyond = basis.tail_lambda_upper(M_trunc + 1);
    if (basis.is_torus()) return beyond;
    if (M_trunc >= basis.count()) return 0.0;
    return beyond * (2.0 * static_cast<double>(basis.count()) - 1.0) *
           (2.0 * static_cast<double>(m - 1));
}

/**
 * Certified additive bound on how much the infinite tail-Gram deviation can
 * exceed the one truncated at M_trunc: cross-term sqrt(T~(m) * discard) plus
 * the discarded block's own norm.
 */
inline double truncation_uncertainty_bound(const SpectralBasis& basis, std::size_t m,
                                           std::size_t M_trunc) {
    const double discard = discarded_tail_mass(basis, m, M_trunc);
    if (discard == 0.0) return 0.0;
    const double T_tilde = 2.0 * basis.tail_lambda_upper(m);
    return std::sqrt(T_tilde * discard) + discard;
}

/**
 * Smallest M_trunc in [m, count()] whose truncation uncertainty is certified
 * below tol. Throws truncation_error when the retained spectrum cannot
 * certify tol.
 */
inline std::size_t choose_truncation(const SpectralBasis& basis, std::size_t m, double tol) {
    if (m < 2 || m > basis.count()) throw range_error("choose_truncation: m out of range");
    std::size_t lo = m, hi = basis.count();
    if (truncation_uncertainty_bound(basis, m, hi) > tol)
        throw truncation_error("retained spectrum cannot certify the requested truncation tolerance");
    while (lo < hi) {
        const std::size_t mid = lo + (hi - lo) / 2;
        if (truncation_uncertainty_bound(basis, m, mid) <= tol)
            hi = mid;
        else
            lo = mid + 1;
    }
    return lo;
}

/**
 * Spectral-norm deviation ||(1/n) Phi* Phi - Lambda|| of the weighted tail
 * Gram, truncated at M_trunc, with the certified discard bound reported.
 */
inline TailDeviationReport tail_deviation(const SpectralBasis& basis, const NodeSet& nodes,
                                          std::size_t m, std::size_t M_trunc, double r = 2.0) {
    if (m < 2 || M_trunc < m || M_trunc > basis.count())
        throw range_error("tail_deviation: need 2 <= m <= M_trunc <= count");
    const std::size_t width = M_trunc - m + 1;
    const std::size_t n = nodes.n;
    CMat A = CMat::Zero(width, width);
    std::vector<Complex> row(width);
    CVec y(width);
    for (std::size_t j = 0; j < n; ++j) {
        const double rho = nodes.density_values[j];
        if (rho == 0.0) continue;
        basis.eval_row(nodes.node(j), m, M_trunc, row.data());
        const double w = 1.0 / std::sqrt(rho);
        for (std::size_t l = 0; l < width; ++l) y(l) = w * basis.sigma(m + l) * row[l];
        A.selfadjointView<Eigen::Lower>().rankUpdate(y, 1.0);
    }
    A = A.selfadjointView<Eigen::Lower>();
    A /= static_cast<double>(n);
    for (std::size_t l = 0; l < width; ++l) A(l, l) -= basis.lambda(m + l);

    TailDeviationReport rep;
    rep.m = m;
    rep.n = n;
    rep.M_trunc = M_trunc;
    const auto [lo, hi] = hermitian_extremal_eigs(A);
    rep.deviation = std::max(std::abs(lo), std::abs(hi));

    const SamplingDensity d = make_density(basis, m);
    const double M_sq = transformed_tail_bound(d);
    rep.bound_F = std::max((8.0 * r * std::log(static_cast<double>(n)) / static_cast<double>(n)) *
                               M_sq * kappa_golden * kappa_golden,
                           basis.lambda(m));
    rep.truncation_uncertainty = truncation_uncertainty_bound(basis, m, M_trunc);
    rep.truncation_certified = rep.truncation_uncertainty <= 1e-10;
    return rep;
}

struct FrameTrialSummary {
    std::size_t trials = 0;
    std::size_t failures = 0;
    std::vector<std::pair<double, double>> extremal; ///< per trial (eigen_min, eigen_max)
};

/// Independent frame-event trials over disjoint RNG streams.
inline FrameTrialSummary run_frame_trials(const SpectralBasis& basis, std::size_t m,
                                          std::size_t n, double r, std::size_t trials,
                                          uint64_t seed, int jobs = 1) {
    const SamplingDensity d = make_density(basis, m);
    FrameTrialSummary summary;
    summary.trials = trials;
    summary.extremal.resize(trials);
    std::vector<char> failed(trials, 0);
    parallel_for(trials, jobs, [&](std::size_t t) {
        const NodeSet nodes = draw_nodes(d, n, derive_seed(seed, t));
        const FrameCertificate cert = certify_frame_streamed(basis, nodes, m, r);
        summary.extremal[t] = {cert.eigen_min, cert.eigen_max};
        failed[t] = cert.passed ? 0 : 1;
    });
    for (char f : failed) summary.failures += f;
    return summary;
}

struct TailTrialSummary {
    std::size_t trials = 0;
    std::size_t exceed = 0; ///< trials with deviation >= bound_F
    std::vector<double> deviations;
};

inline TailTrialSummary run_tail_trials(const SpectralBasis& basis, std::size_t m,
                                        std::size_t M_trunc, std::size_t n, double r,
                                        std::size_t trials, uint64_t seed, int jobs = 1) {
    const SamplingDensity d = make_density(basis, m);
    TailTrialSummary summary;
    summary.trials = trials;
    summary.deviations.resize(trials);
    std::vector<char> exceed(trials, 0);
    parallel_for(trials, jobs, [&](std::size_t t) {
        const NodeSet nodes = draw_nodes(d, n, derive_seed(seed, t));
        const TailDeviationReport rep = tail_deviation(basis, nodes, m, M_trunc, r);
        summary.deviations[t] = rep.deviation;
        exceed[t] = rep.deviation >= rep.bound_F ? 1 : 0;
    });
    for (char e : exceed) summary.exceed += e;
    return summary;
}

} // namespace rksample
