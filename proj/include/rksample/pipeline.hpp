#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rksample/concentration.hpp"
#include "rksample/density.hpp"
#include "rksample/errors.hpp"
#include "rksample/io.hpp"
#include "rksample/leastsq.hpp"
#include "rksample/linalg.hpp"
#include "rksample/parallel.hpp"
#include "rksample/rng.hpp"
#include "rksample/spectrum.hpp"
#include "rksample/weaver.hpp"

namespace rksample {

enum class RecoveryMethod { RandomOnly, RandomThenSubsample };

inline const char* to_string(RecoveryMethod m) {
    return m == RecoveryMethod::RandomOnly ? "RandomOnly" : "RandomThenSubsample";
}

inline RecoveryMethod recovery_method_from_string(const std::string& s) {
    if (s == "RandomOnly") return RecoveryMethod::RandomOnly;
    if (s == "RandomThenSubsample") return RecoveryMethod::RandomThenSubsample;
    throw range_error("unknown recovery method: " + s);
}

struct ErrorReport {
    std::size_t m = 2;
    std::size_t n_drawn = 0;
    std::size_t n_used = 0;
    std::size_t M_trunc = 2;
    std::size_t retries = 0;
    double wce = 0.0;            ///< wce_truncated + tail_certificate
    double wce_truncated = 0.0;  ///< largest singular value of the truncated error operator
    double tail_certificate = 0.0;
    double sigma_m = 0.0;
    double bound_rhs = 0.0; ///< c5 (log m / m) sum_{k >= floor(m/2)} sigma_k^2
    RecoveryMethod method = RecoveryMethod::RandomOnly;
    uint64_t seed = 0;
};

/// Right side of the explicit sampling bound; certified upper tail summation.
inline double paper_bound_rhs(const SpectralBasis& basis, std::size_t m) {
    if (m < 2) throw range_error("paper_bound_rhs: m >= 2 required");
    const double c5 = remark_constant_chain().c5;
    const std::size_t half = std::max<std::size_t>(1, m / 2);
    const double tail =
        half > basis.count() ? 0.0 : basis.tail_lambda_upper(half);
    return c5 * std::log(static_cast<double>(m)) / static_cast<double>(m) * tail;
}

/**
 * Default truncation order: smallest M with sigma_{M+1} <= 1e-6 sigma_m,
 * capped at 64 m (polynomially decaying spectra never reach the sigma rule
 * at feasible sizes) and at the retained spectrum.
 */
inline std::size_t default_truncation(const SpectralBasis& basis, std::size_t m) {
    const std::size_t cap = std::min<std::size_t>(64 * m, basis.count());
    std::size_t M = std::min<std::size_t>(std::max<std::size_t>(2 * m, m + 1), cap);
    const double target = 1e-6 * basis.sigma(m);
    while (M < cap && basis.sigma(M + 1) > target) ++M;
    return M;
}

namespace detail {

/// Columns [k_begin, k_end] of the weighted evaluation matrix, rows scaled by
/// sigma_k / sqrt(rho_i): the coefficient-to-samples map for e_k directions.
inline CMat sample_matrix_block(const SpectralBasis& basis, const NodeSet& nodes,
                                std::size_t k_begin, std::size_t k_end) {
    const std::size_t width = k_end - k_begin + 1;
    CMat W(nodes.n, width);
    std::vector<Complex> row(width);
    for (std::size_t i = 0; i < nodes.n; ++i) {
        const double rho = nodes.density_values[i];
        if (rho == 0.0) {
            W.row(i).setZero();
            continue;
        }
        basis.eval_row(nodes.node(i), k_begin, k_end, row.data());
        const double w = 1.0 / std::sqrt(rho);
        for (std::size_t c = 0; c < width; ++c)
            W(i, c) = w * basis.sigma(k_begin + c) * row[c];
    }
    return W;
}

/// B = pinv(L~) applied to the e_k sample columns for k in [k_begin, k_end].
inline CMat recovery_image_block(const RecoveryOperator& op, std::size_t k_begin,
                                 std::size_t k_end) {
    constexpr std::size_t block = 512;
    const std::size_t width = k_end - k_begin + 1;
    CMat B(op.m() - 1, width);
    for (std::size_t k0 = k_begin; k0 <= k_end; k0 += block) {
        const std::size_t k1 = std::min(k_end, k0 + block - 1);
        const CMat W = sample_matrix_block(op.basis(), op.nodes(), k0, k1);
        for (std::size_t c = 0; c < static_cast<std::size_t>(W.cols()); ++c)
            B.col(k0 - k_begin + c) = op.solver().solve(W.col(c));
    }
    return B;
}

/// lambda_max of the Gram of the beyond-M_trunc tail features on the nodes,
/// G = K~(x_i, x_j) - sum_{k <= M} column outer products. Dense and exact to
/// round-off; requires the closed-form kernel.
inline double beyond_gram_lambda_max(const SpectralBasis& basis, const NodeSet& nodes,
                                     std::size_t M_trunc) {
    const std::size_t n = nodes.n;
    CMat G(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            const double k = basis.kernel_value(nodes.node(i), nodes.node(j));
            const double w = std::sqrt(nodes.density_values[i] * nodes.density_values[j]);
            G(i, j) = Complex(w == 0.0 ? 0.0 : k / w, 0.0);
        }
    }
    constexpr std::size_t block = 256;
    for (std::size_t k0 = 1; k0 <= M_trunc; k0 += block) {
        const std::size_t k1 = std::min(M_trunc, k0 + block - 1);
        const CMat W = sample_matrix_block(basis, nodes, k0, k1);
        G.selfadjointView<Eigen::Lower>().rankUpdate(W, -1.0);
    }
    const CMat Gs = G.selfadjointView<Eigen::Lower>();
    Eigen::SelfAdjointEigenSolver<CMat> es(Gs, Eigen::EigenvaluesOnly);
    return std::max(0.0, es.eigenvalues().maxCoeff());
}

} // namespace detail

/// Size limit for the dense beyond-tail Gram; above it the crude norm bound
/// sqrt(n * discarded mass) is used instead.
inline constexpr std::size_t sharp_certificate_node_limit = 4096;

/**
 * Largest singular value of the truncated error operator plus an additive
 * certificate for everything beyond M_trunc. Input directions are
 * coefficients of f = sum_{k <= M_trunc} c_k e_k, ||c||_2 <= 1; directions in
 * span{e_1..e_{m-1}} are reproduced exactly and contribute zero.
 */
inline ErrorReport worst_case_error(const RecoveryOperator& op, std::size_t M_trunc) {
    const SpectralBasis& basis = op.basis();
    const std::size_t m = op.m();
    if (M_trunc < m || M_trunc > basis.count())
        throw truncation_error("worst_case_error: need m <= M_trunc <= retained count");
    if (basis.is_torus() && M_trunc >= basis.count())
        throw truncation_error("worst_case_error: no retained eigenvalue beyond M_trunc "
                               "to certify the remainder");

    ErrorReport rep;
    rep.m = m;
    rep.n_drawn = rep.n_used = op.n_used();
    rep.M_trunc = M_trunc;
    rep.sigma_m = basis.sigma(m);
    rep.bound_rhs = paper_bound_rhs(basis, m);

    // truncated operator: only tail directions c_k, k in [m, M_trunc], matter;
    // wce^2 = lambda_max(B^H B + D^2) with B the recovery image of the tail
    // columns and D = diag(sigma_m..sigma_M) the projection error
    const std::size_t width = M_trunc - m + 1;
    const CMat B = detail::recovery_image_block(op, m, M_trunc);
    CVec D2(width);
    for (std::size_t c = 0; c < width; ++c) D2(c) = basis.lambda(m + c);
    const auto apply = [&](const CVec& v) -> CVec {
        CVec out = B.adjoint() * (B * v);
        out += D2.cwiseProduct(v);
        return out;
    };
    const TopEig top = lanczos_top_eig(apply, static_cast<int>(width), /*seed=*/0);
    rep.wce_truncated = std::sqrt(std::max(0.0, top.value));

    // beyond-M_trunc certificate: ||[B_beyond; D_beyond]|| <= ||pinv|| ||W_beyond|| + sigma_{M+1}
    if (!basis.is_torus()) {
        if (M_trunc == basis.count()) {
            rep.tail_certificate = 0.0; // finite rank, nothing beyond
        } else {
            const std::size_t bwidth = basis.count() - M_trunc;
            const CMat Bb = detail::recovery_image_block(op, M_trunc + 1, basis.count());
            CMat E(m - 1 + bwidth, bwidth);
            E.topRows(m - 1) = Bb;
            E.bottomRows(bwidth).setZero();
            for (std::size_t c = 0; c < bwidth; ++c)
                E(m - 1 + c, c) = basis.sigma(M_trunc + 1 + c);
            Eigen::JacobiSVD<CMat> svd(E);
            rep.tail_certificate = svd.singularValues()(0);
        }
    } else if (basis.has_closed_kernel() && op.n_used() <= sharp_certificate_node_limit) {
        const double lmax = detail::beyond_gram_lambda_max(basis, op.nodes(), M_trunc);
        rep.tail_certificate = op.pinv_norm() * std::sqrt(lmax) + basis.sigma(M_trunc + 1);
    } else {
        const double mass = discarded_tail_mass(basis, m, M_trunc);
        rep.tail_certificate = op.pinv_norm() * std::sqrt(static_cast<double>(op.n_used()) * mass) +
                               basis.sigma(M_trunc + 1);
    }
    rep.wce = rep.wce_truncated + rep.tail_certificate;
    return rep;
}

/**
 * Test oracle: the same truncated value via the orthogonal split, formed as a
 * dense Gram B^H B + D^2 and solved directly. Quadratic in the tail width.
 */
inline double worst_case_error_split_dense(const RecoveryOperator& op, std::size_t M_trunc) {
    const SpectralBasis& basis = op.basis();
    const std::size_t m = op.m();
    const std::size_t width = M_trunc - m + 1;
    if (width > 4096) throw range_error("dense split oracle limited to tail width 4096");
    const CMat B = detail::recovery_image_block(op, m, M_trunc);
    CMat G = B.adjoint() * B;
    for (std::size_t c = 0; c < width; ++c) G(c, c) += basis.lambda(m + c);
    Eigen::SelfAdjointEigenSolver<CMat> es(G, Eigen::EigenvaluesOnly);
    return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
}

struct ExperimentOptions {
    double r = 2.0;
    std::size_t max_retries = 20;
    std::size_t subsample_factor = 4;       ///< greedy target = factor * m
    std::size_t pool_cap_base = 2048;       ///< greedy pool <= max(base, pool_cap_per_m * m)
    std::size_t pool_cap_per_m = 64;        ///< keeps the kept fraction <= ~6% at every m
    std::size_t M_trunc = 0;                ///< 0 = default_truncation
    BarrierGreedyParams greedy{};
};

/**
 * One end-to-end run: draw n = smallest_n(m, 40) nodes, certify the frame
 * (fresh seed per retry), optionally subsample to ~4m nodes with the barrier
 * greedy, build the recovery operator, and report the worst-case error.
 */
inline ErrorReport run_recovery_experiment(const KernelModel& model, std::size_t m,
                                           RecoveryMethod method, double r, uint64_t seed,
                                           const ExperimentOptions& opts = {}) {
    if (m < 2) throw range_error("run_recovery_experiment: m >= 2 required");
    const bool torus = std::holds_alternative<TorusMixedSobolev>(model);
    const std::size_t count = torus ? 64 * m + 2 : std::get<LegendreSpectrum>(model).sigma.size();
    const SpectralBasis basis = enumerate_spectrum(model, count);
    if (m > basis.count()) throw range_error("run_recovery_experiment: m exceeds spectrum");
    const SamplingDensity density = make_density(basis, m);
    const std::size_t n = smallest_n(m, 40.0);

    NodeSet nodes;
    std::size_t retries = 0;
    bool certified = false;
    for (; retries <= opts.max_retries; ++retries) {
        nodes = draw_nodes(density, n, derive_seed(seed, retries));
        const FrameCertificate cert = certify_frame_streamed(basis, nodes, m, r);
        if (cert.passed) {
            certified = true;
            break;
        }
    }
    if (!certified)
        throw experiment_error("frame certification failed " +
                               std::to_string(opts.max_retries + 1) +
                               " times; regime outside the concentration guarantee");

    NodeSet kept = nodes;
    if (method == RecoveryMethod::RandomThenSubsample) {
        // candidate pool, capped by shuffling to keep the greedy tractable
        const std::size_t cap = std::max(opts.pool_cap_base, opts.pool_cap_per_m * m);
        std::vector<std::size_t> pool(n);
        for (std::size_t i = 0; i < n; ++i) pool[i] = i;
        if (n > cap) {
            RngStream rng(derive_seed(seed, 0xB10C0001u), 0);
            for (std::size_t i = 0; i < cap; ++i) {
                const std::size_t j = i + rng.index(n - i);
                std::swap(pool[i], pool[j]);
            }
            pool.resize(cap);
            std::sort(pool.begin(), pool.end());
        }
        // frame rows evaluated directly on the pool; never materialize all n rows
        CMat rows(pool.size(), m - 1);
        {
            const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(n));
            std::vector<Complex> row(m - 1);
            for (std::size_t i = 0; i < pool.size(); ++i) {
                const double rho = nodes.density_values[pool[i]];
                if (rho == 0.0) {
                    rows.row(i).setZero();
                    continue;
                }
                basis.eval_row(nodes.node(pool[i]), 1, m - 1, row.data());
                const double w = inv_sqrt_n / std::sqrt(rho);
                for (std::size_t c = 0; c + 1 < m; ++c) rows(i, c) = w * row[c];
            }
        }
        const FiniteFrame frame = make_frame(std::move(rows));
        std::vector<std::size_t> J;
        for (std::size_t factor = opts.subsample_factor; factor <= opts.subsample_factor + 2;
             ++factor) {
            const SubsampleResult sub =
                barrier_greedy_subsample(frame, std::min(pool.size(), factor * m), opts.greedy);
            if (sub.achieved_bounds.first > 0.0) {
                J = sub.J;
                break;
            }
        }
        if (J.empty()) throw rank_error("subsampled frame failed to reach full rank");
        kept.n = J.size();
        kept.nodes.resize(J.size() * nodes.dim);
        kept.density_values.resize(J.size());
        for (std::size_t i = 0; i < J.size(); ++i) {
            const std::size_t src = pool[J[i]];
            for (int d = 0; d < nodes.dim; ++d)
                kept.nodes[i * nodes.dim + d] = nodes.nodes[src * nodes.dim + d];
            kept.density_values[i] = nodes.density_values[src];
        }
    }

    const RecoveryOperator op(basis, kept, m);
    const std::size_t M_trunc = opts.M_trunc ? opts.M_trunc : default_truncation(basis, m);
    ErrorReport rep = worst_case_error(op, M_trunc);
    rep.n_drawn = n;
    rep.retries = retries;
    rep.method = method;
    rep.seed = seed;
    return rep;
}

struct RateFit {
    std::vector<std::pair<double, double>> grid; ///< (n_used, wce)
    double slope = 0.0;
    double intercept = 0.0;
    double rms_residual = 0.0;
    double max_residual = 0.0;
    double slope_with_loglog = 0.0; ///< slope when a log log n term is included
    double loglog_coefficient = 0.0;
};

/// Least-squares fit of log wce against log n_used (and, as a diagnostic,
/// against log n_used and log log n_used jointly).
inline RateFit fit_rate(const std::vector<ErrorReport>& reports, double /*s*/, int /*d*/) {
    if (reports.size() < 5) throw experiment_error("fit_rate: need at least 5 reports");
    RateFit fit;
    double n_min = std::numeric_limits<double>::infinity(), n_max = 0.0;
    for (const auto& r : reports) {
        if (!(r.wce > 0.0) || r.n_used < 3) throw experiment_error("fit_rate: degenerate report");
        const double n = static_cast<double>(r.n_used);
        fit.grid.emplace_back(n, r.wce);
        n_min = std::min(n_min, n);
        n_max = std::max(n_max, n);
    }
    if (n_max < 4.0 * n_min)
        throw experiment_error("fit_rate: grid must span at least two octaves in n_used");
    std::sort(fit.grid.begin(), fit.grid.end());

    const std::size_t N = fit.grid.size();
    RMat X(N, 2), X3(N, 3);
    RVec y(N);
    for (std::size_t i = 0; i < N; ++i) {
        X(i, 0) = 1.0;
        X(i, 1) = std::log(fit.grid[i].first);
        X3(i, 0) = 1.0;
        X3(i, 1) = X(i, 1);
        X3(i, 2) = std::log(X(i, 1));
        y(i) = std::log(fit.grid[i].second);
    }
    const RVec coef = linear_fit(X, y);
    fit.intercept = coef(0);
    fit.slope = coef(1);
    const RVec resid = y - X * coef;
    fit.rms_residual = std::sqrt(resid.squaredNorm() / static_cast<double>(N));
    fit.max_residual = resid.cwiseAbs().maxCoeff();
    const RVec coef3 = linear_fit(X3, y);
    fit.slope_with_loglog = coef3(1);
    fit.loglog_coefficient = coef3(2);
    return fit;
}

/// Grid of independent experiments; trial t of order m uses child seed
/// derive_seed(seed, m * 1000 + t).
inline std::vector<ErrorReport> run_rate_grid(const KernelModel& model,
                                              const std::vector<std::size_t>& m_grid,
                                              RecoveryMethod method, double r,
                                              std::size_t trials, uint64_t seed,
                                              const ExperimentOptions& opts = {}, int jobs = 1) {
    std::vector<ErrorReport> reports(m_grid.size() * trials);
    parallel_for(reports.size(), jobs, [&](std::size_t idx) {
        const std::size_t mi = idx / trials, t = idx % trials;
        reports[idx] = run_recovery_experiment(model, m_grid[mi], method, r,
                                               derive_seed(seed, m_grid[mi] * 1000 + t), opts);
    });
    return reports;
}

inline void write_results_csv(const std::vector<ErrorReport>& reports, std::ostream& out) {
    out << "m,n_drawn,n_used,wce,sigma_m,bound_rhs,retries,seed,method\n";
    for (const auto& r : reports) {
        out << r.m << ',' << r.n_drawn << ',' << r.n_used << ',' << format_double(r.wce) << ','
            << format_double(r.sigma_m) << ',' << format_double(r.bound_rhs) << ',' << r.retries
            << ',' << r.seed << ',' << to_string(r.method) << '\n';
    }
}

/// Log-log scatter of (n_used, wce) with the sigma_m benchmark per report.
inline void write_rate_svg(const std::vector<ErrorReport>& reports, std::ostream& out) {
    if (reports.empty()) throw experiment_error("write_rate_svg: no reports");
    const double W = 640, H = 480, pad = 56;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& r : reports) {
        const double x = std::log10(static_cast<double>(r.n_used));
        for (double v : {r.wce, r.sigma_m}) {
            if (!(v > 0.0)) continue;
            const double y = std::log10(v);
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
        }
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
    }
    if (xmax - xmin < 1e-9) xmax = xmin + 1.0;
    if (ymax - ymin < 1e-9) ymax = ymin + 1.0;
    const auto px = [&](double x) { return pad + (x - xmin) / (xmax - xmin) * (W - 2 * pad); };
    const auto py = [&](double y) { return H - pad - (y - ymin) / (ymax - ymin) * (H - 2 * pad); };
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
        << "\" viewBox=\"0 0 " << W << ' ' << H << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<line x1=\"" << pad << "\" y1=\"" << H - pad << "\" x2=\"" << W - pad << "\" y2=\""
        << H - pad << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << pad << "\" y1=\"" << pad << "\" x2=\"" << pad << "\" y2=\""
        << H - pad << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << W / 2 << "\" y=\"" << H - 12
        << "\" text-anchor=\"middle\" font-size=\"12\">log10 n_used</text>\n";
    out << "<text x=\"14\" y=\"" << H / 2
        << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 14 " << H / 2
        << ")\">log10 error</text>\n";
    for (const auto& r : reports) {
        const double x = px(std::log10(static_cast<double>(r.n_used)));
        out << "<circle cx=\"" << x << "\" cy=\"" << py(std::log10(r.wce))
            << "\" r=\"3\" fill=\"#1f77b4\"/>\n";
        out << "<rect x=\"" << x - 2.5 << "\" y=\"" << py(std::log10(r.sigma_m)) - 2.5
            << "\" width=\"5\" height=\"5\" fill=\"#d62728\"/>\n";
    }
    out << "<circle cx=\"" << W - pad - 150 << "\" cy=\"" << pad
        << "\" r=\"3\" fill=\"#1f77b4\"/><text x=\"" << W - pad - 140 << "\" y=\"" << pad + 4
        << "\" font-size=\"12\">wce</text>\n";
    out << "<rect x=\"" << W - pad - 152.5 << "\" y=\"" << pad + 15.5
        << "\" width=\"5\" height=\"5\" fill=\"#d62728\"/><text x=\"" << W - pad - 140
        << "\" y=\"" << pad + 22 << "\" font-size=\"12\">sigma_m</text>\n";
    out << "</svg>\n";
}

} // namespace rksample
