#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "rksample/errors.hpp"
#include "rksample/io.hpp"
#include "rksample/linalg.hpp"
#include "rksample/parallel.hpp"
#include "rksample/rng.hpp"

namespace rksample {

inline constexpr double zeta_weaver = 3.414213562373095049; ///< 2+sqrt(2)

/// (2+sqrt(2))^{-2} = 3/2 - sqrt(2), the trivial-regime threshold for eps/alpha.
inline constexpr double weaver_trivial_threshold = 0.085786437626904951;

enum class SubsampleMethod { BruteForcePartition, RecursiveHalving, BarrierGreedy };
enum class Regime { Large, Small };

inline const char* to_string(SubsampleMethod m) {
    switch (m) {
        case SubsampleMethod::BruteForcePartition: return "BruteForcePartition";
        case SubsampleMethod::RecursiveHalving: return "RecursiveHalving";
        case SubsampleMethod::BarrierGreedy: return "BarrierGreedy";
    }
    return "?";
}
inline const char* to_string(Regime r) { return r == Regime::Large ? "Large" : "Small"; }

/**
 * n vectors u_1..u_n in C^m stored as rows. The frame operator sum u_i (x) u_i
 * shares its spectrum with vectors^H vectors, which is what all bounds use.
 */
struct FiniteFrame {
    CMat vectors; ///< n x m, row i = u_i
    double norm_bound = 0.0; ///< eps = max ||u_i||^2
    double alpha = 0.0, beta = 0.0;

    std::size_t size() const { return static_cast<std::size_t>(vectors.rows()); }
    std::size_t dim() const { return static_cast<std::size_t>(vectors.cols()); }
};

inline FiniteFrame make_frame(CMat vectors) {
    if (vectors.rows() < 1 || vectors.cols() < 1)
        throw range_error("frame needs at least one vector and one dimension");
    FiniteFrame f;
    f.vectors = std::move(vectors);
    f.norm_bound = f.vectors.rowwise().squaredNorm().maxCoeff();
    const CMat G = f.vectors.adjoint() * f.vectors;
    const auto [lo, hi] = hermitian_extremal_eigs(G);
    f.alpha = std::max(0.0, lo);
    f.beta = hi;
    return f;
}

inline CMat sub_gram(const FiniteFrame& frame, const std::vector<std::size_t>& J) {
    CMat G = CMat::Zero(frame.dim(), frame.dim());
    for (std::size_t i : J)
        G.selfadjointView<Eigen::Lower>().rankUpdate(frame.vectors.row(i).adjoint(), 1.0);
    return G.selfadjointView<Eigen::Lower>();
}

inline std::pair<double, double> subset_bounds(const FiniteFrame& frame,
                                               const std::vector<std::size_t>& J) {
    if (J.empty()) return {0.0, 0.0};
    return hermitian_extremal_eigs(sub_gram(frame, J));
}

struct GammaProduct {
    double value = 0.0;     ///< partial product over l = 0..L
    double remainder = 0.0; ///< certified additive bound on the truncated rest
};

/**
 * Prod_{l>=0} (1+2^{-1-l/2})/(1-2^{-1-l/2}), partial products until the
 * certified remainder (geometric bound on the log factors) drops below
 * tolerance.
 */
inline GammaProduct gamma_product(double tolerance) {
    if (!(tolerance > 0.0)) throw range_error("gamma_product: tolerance > 0 required");
    GammaProduct g;
    g.value = 1.0;
    const double half_pow = std::sqrt(0.5);
    double q = 0.5; // q_l = 2^{-1-l/2}
    for (int l = 0; l < 4096; ++l) {
        g.value *= (1.0 + q) / (1.0 - q);
        const double q_next = q * half_pow;
        // sum_{j>l} log((1+q_j)/(1-q_j)) <= 2 q_{l+1} / ((1-q_{l+1})(1-2^{-1/2}))
        const double log_rest = 2.0 * q_next / ((1.0 - q_next) * (1.0 - half_pow));
        g.remainder = g.value * std::expm1(log_rest);
        if (g.remainder < tolerance) return g;
        q = q_next;
    }
    throw internal_error("gamma_product failed to converge");
}

struct ConstantBudget {
    double k1 = 1.0, k2 = 1.0, k3 = 1.0;
    double zeta = zeta_weaver;
    double gamma = 0.0; ///< certified gamma product (value + remainder)
    double c1 = 0.0, c2 = 0.0, c3 = 0.0;
    Regime regime = Regime::Large;
};

/// Regime threshold 47 k1/k2 and the two published constant triples.
inline ConstantBudget constant_budget(double k1, double k2, double k3, double ratio_n_over_m) {
    if (!(k1 > 0.0 && k2 > 0.0 && k3 > 0.0))
        throw precondition_error("constant_budget: k1, k2, k3 must be positive");
    if (!(ratio_n_over_m >= 1.0))
        throw precondition_error("constant_budget: n >= m forced by the lower frame bound");
    ConstantBudget b;
    b.k1 = k1;
    b.k2 = k2;
    b.k3 = k3;
    const GammaProduct g = gamma_product(1e-9);
    b.gamma = g.value + g.remainder;
    if (ratio_n_over_m >= 47.0 * k1 / k2) {
        b.regime = Regime::Large;
        b.c1 = 1642.0 * k1 / k2;
        b.c2 = zeta_weaver * zeta_weaver * k1;
        b.c3 = 1642.0 * k1 * k3 / k2;
    } else {
        b.regime = Regime::Small;
        b.c1 = 47.0 * k1 / k2;
        b.c2 = k2;
        b.c3 = 47.0 * k1 * k3 / k2;
    }
    return b;
}

struct AlphaBetaSchedule {
    std::size_t L = 0;
    std::vector<double> alphas; ///< alpha_0..alpha_{L+1}
    std::vector<double> betas;
};

/**
 * The halving schedule alpha_{l+1} = (1-zeta sqrt(delta/alpha_l))/2 alpha_l,
 * beta_{l+1} = (1+zeta sqrt(delta/alpha_l))/2 beta_l, run until alpha drops
 * below (2 zeta)^2 delta. Proof invariants are re-verified numerically.
 */
inline AlphaBetaSchedule alpha_beta_recursion(double delta, double k2, double k3) {
    const double zz = 2.0 * zeta_weaver;
    const double threshold = zz * zz * delta;
    if (!(delta > 0.0) || !(delta < k2 / (zz * zz)))
        throw precondition_error(
            "alpha_beta_recursion: need 0 < delta < (2 zeta)^{-2} k2 "
            "(delta = k1 m/n <= k2/47 < (2 zeta)^{-2} k2 in the intended regime)");
    AlphaBetaSchedule s;
    s.alphas = {k2};
    s.betas = {k3};
    while (s.alphas.back() >= threshold) {
        const double a = s.alphas.back();
        const double b = s.betas.back();
        const double step = zeta_weaver * std::sqrt(delta / a);
        s.alphas.push_back(0.5 * (1.0 - step) * a);
        s.betas.push_back(0.5 * (1.0 + step) * b);
    }
    s.L = s.alphas.size() - 2;
    for (std::size_t l = 0; l + 1 < s.alphas.size(); ++l) {
        const double a = s.alphas[l], a1 = s.alphas[l + 1];
        if (!(a1 >= 0.25 * a * (1.0 - 1e-12)) || !(a1 < 0.5 * a))
            throw internal_error("alpha halving bracket violated");
    }
    const double aL1 = s.alphas.back();
    if (!(aL1 >= zeta_weaver * zeta_weaver * delta * (1.0 - 1e-12)) || !(aL1 < threshold))
        throw internal_error("terminal alpha bracket violated");
    const GammaProduct g = gamma_product(1e-9);
    if (!(s.betas.back() / aL1 <= (g.value + g.remainder) * k3 / k2 * (1.0 + 1e-12)))
        throw internal_error("beta/alpha ratio exceeds the gamma product bound");
    return s;
}

/// Two-sided per-class feasibility bounds for a frame with eps, alpha, beta.
inline double partition_upper_bound(double eps, double alpha, double beta) {
    return 0.5 * std::pow(1.0 + std::sqrt(2.0 * eps / alpha), 2) * beta;
}
inline double partition_lower_bound(double eps, double alpha) {
    return 0.5 * (1.0 - zeta_weaver * std::sqrt(eps / alpha)) * alpha;
}

struct PartitionResult {
    std::vector<std::size_t> S1, S2;
    std::pair<double, double> bounds1{0.0, 0.0}; ///< (lambda_min, lambda_max)
    std::pair<double, double> bounds2{0.0, 0.0};
    double lower_bound = 0.0; ///< feasibility thresholds used
    double upper_bound = 0.0;
    bool feasible = false;
};

namespace detail {

struct PartitionCandidate {
    double objective = std::numeric_limits<double>::infinity();
    bool feasible = false;
    std::vector<std::size_t> S1;
    std::pair<double, double> bounds1{0.0, 0.0}, bounds2{0.0, 0.0};

    /// Ranking: feasible first, then smaller worse-lambda_max, then lex S1.
    bool better_than(const PartitionCandidate& other) const {
        if (feasible != other.feasible) return feasible;
        if (objective != other.objective) return objective < other.objective;
        return std::lexicographical_compare(S1.begin(), S1.end(), other.S1.begin(),
                                            other.S1.end());
    }
};

inline bool within(const std::pair<double, double>& bounds, double lo, double hi, double tol) {
    return bounds.first >= lo - tol && bounds.second <= hi + tol;
}

} // namespace detail

/**
 * Exhaustive two-class partition search, index 0 pinned to S1. Feasibility
 * against the two-sided bounds above; among feasible partitions the one
 * minimizing the worse per-class lambda_max wins, ties broken by
 * lexicographically smallest S1.
 */
inline PartitionResult brute_force_partition(const FiniteFrame& frame, int jobs = 1) {
    const std::size_t n = frame.size();
    if (n > 24)
        throw budget_error(
            "brute_force_partition is limited to n <= 24; use recursive_halving or "
            "barrier_greedy_subsample");
    const double eps = frame.norm_bound;
    const double lower = partition_lower_bound(eps, frame.alpha);
    const double upper = partition_upper_bound(eps, frame.alpha, frame.beta);
    const double tol = 1e-9 * std::max(1.0, frame.beta);
    const CMat total = frame.vectors.adjoint() * frame.vectors;

    const uint64_t masks = n >= 1 ? (uint64_t{1} << (n - 1)) : 1;
    const int workers = std::max(1, jobs);
    std::vector<detail::PartitionCandidate> best_per(workers);
    const uint64_t chunk = (masks + workers - 1) / workers;
    parallel_for(static_cast<std::size_t>(workers), jobs, [&](std::size_t w) {
        detail::PartitionCandidate best;
        CMat A1(frame.dim(), frame.dim());
        const uint64_t lo = w * chunk, hi = std::min(masks, lo + chunk);
        for (uint64_t mask = lo; mask < hi; ++mask) {
            A1.setZero();
            std::vector<std::size_t> S1{0};
            A1.selfadjointView<Eigen::Lower>().rankUpdate(frame.vectors.row(0).adjoint(), 1.0);
            for (std::size_t j = 1; j < n; ++j) {
                if (mask >> (j - 1) & 1) {
                    S1.push_back(j);
                    A1.selfadjointView<Eigen::Lower>().rankUpdate(frame.vectors.row(j).adjoint(),
                                                                  1.0);
                }
            }
            const CMat A1s = A1.selfadjointView<Eigen::Lower>();
            const CMat A2 = total - A1s;
            const auto b1 = hermitian_extremal_eigs(A1s);
            const auto b2 = hermitian_extremal_eigs(A2);
            detail::PartitionCandidate cand;
            cand.feasible =
                detail::within(b1, lower, upper, tol) && detail::within(b2, lower, upper, tol);
            cand.objective = std::max(b1.second, b2.second);
            cand.bounds1 = b1;
            cand.bounds2 = b2;
            cand.S1 = std::move(S1);
            if (cand.better_than(best)) best = std::move(cand);
        }
        best_per[w] = std::move(best);
    });
    detail::PartitionCandidate best;
    for (auto& cand : best_per)
        if (cand.better_than(best)) best = std::move(cand);

    PartitionResult res;
    res.S1 = std::move(best.S1);
    for (std::size_t j = 0; j < n; ++j)
        if (!std::binary_search(res.S1.begin(), res.S1.end(), j)) res.S2.push_back(j);
    res.bounds1 = best.bounds1;
    res.bounds2 = best.bounds2;
    res.lower_bound = lower;
    res.upper_bound = upper;
    res.feasible = best.feasible;
    return res;
}

/**
 * Randomized local search: random balanced start, steepest single-index moves
 * on (violation, worse lambda_max), fixed restart count. Targets an explicit
 * [lo, hi] bracket for both classes; inherits no guarantee.
 */
inline PartitionResult local_search_partition(const FiniteFrame& frame, double lo, double hi,
                                              int restarts = 50, uint64_t seed = 0) {
    const std::size_t n = frame.size();
    if (n < 2) throw range_error("local_search_partition: need at least two vectors");
    const std::size_t m = frame.dim();
    const CMat total = frame.vectors.adjoint() * frame.vectors;
    const double scale = std::max(1.0, frame.beta);

    const auto evaluate = [&](const CMat& A1) {
        const CMat A1s = A1.selfadjointView<Eigen::Lower>();
        const CMat A2 = total - A1s;
        const auto b1 = hermitian_extremal_eigs(A1s);
        const auto b2 = hermitian_extremal_eigs(A2);
        const double violation = std::max(0.0, b1.second - hi) + std::max(0.0, lo - b1.first) +
                                 std::max(0.0, b2.second - hi) + std::max(0.0, lo - b2.first);
        return std::tuple{violation, std::max(b1.second, b2.second), b1, b2};
    };

    detail::PartitionCandidate best;
    double best_violation = std::numeric_limits<double>::infinity();
    for (int restart = 0; restart < restarts; ++restart) {
        RngStream rng(seed, static_cast<uint64_t>(restart));
        std::vector<char> in1(n, 0);
        // random balanced start, index 0 pinned to class 1
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        for (std::size_t i = n - 1; i > 0; --i)
            std::swap(order[i], order[rng.index(i + 1)]);
        in1[0] = 1;
        std::size_t count1 = 1;
        for (std::size_t i : order) {
            if (i == 0 || count1 >= n / 2) continue;
            in1[i] = 1;
            ++count1;
        }
        CMat A1 = CMat::Zero(m, m);
        for (std::size_t i = 0; i < n; ++i)
            if (in1[i])
                A1.selfadjointView<Eigen::Lower>().rankUpdate(frame.vectors.row(i).adjoint(), 1.0);

        auto [violation, objective, b1, b2] = evaluate(A1);
        for (int sweep = 0; sweep < 400; ++sweep) {
            double move_violation = violation, move_objective = objective;
            std::size_t move_index = n;
            std::pair<double, double> move_b1 = b1, move_b2 = b2;
            for (std::size_t i = 1; i < n; ++i) { // index 0 stays in class 1
                const double sign = in1[i] ? -1.0 : 1.0;
                CMat trial = A1;
                trial.selfadjointView<Eigen::Lower>().rankUpdate(frame.vectors.row(i).adjoint(),
                                                                 sign);
                auto [tv, to, tb1, tb2] = evaluate(trial);
                const bool improves = tv < move_violation - 1e-15 * scale ||
                                      (tv <= move_violation && to < move_objective - 1e-15 * scale);
                if (improves) {
                    move_violation = tv;
                    move_objective = to;
                    move_index = i;
                    move_b1 = tb1;
                    move_b2 = tb2;
                }
            }
            if (move_index == n) break;
            const double sign = in1[move_index] ? -1.0 : 1.0;
            A1.selfadjointView<Eigen::Lower>().rankUpdate(frame.vectors.row(move_index).adjoint(),
                                                          sign);
            in1[move_index] = !in1[move_index];
            violation = move_violation;
            objective = move_objective;
            b1 = move_b1;
            b2 = move_b2;
        }
        detail::PartitionCandidate cand;
        cand.feasible = violation == 0.0;
        cand.objective = objective;
        cand.bounds1 = b1;
        cand.bounds2 = b2;
        for (std::size_t i = 0; i < n; ++i)
            if (in1[i]) cand.S1.push_back(i);
        const bool better = cand.feasible != best.feasible
                                ? cand.feasible
                                : (violation != best_violation ? violation < best_violation
                                                               : cand.better_than(best));
        if (better) {
            best_violation = violation;
            best = std::move(cand);
        }
        if (best.feasible && best_violation == 0.0 && restart >= std::min(restarts - 1, 4)) break;
    }

    PartitionResult res;
    res.S1 = std::move(best.S1);
    for (std::size_t j = 0; j < n; ++j)
        if (!std::binary_search(res.S1.begin(), res.S1.end(), j)) res.S2.push_back(j);
    res.bounds1 = best.bounds1;
    res.bounds2 = best.bounds2;
    res.lower_bound = lo;
    res.upper_bound = hi;
    res.feasible = best.feasible;
    return res;
}

struct SubsampleResult {
    std::vector<std::size_t> J;
    std::pair<double, double> achieved_bounds{0.0, 0.0};
    ConstantBudget budget;
    SubsampleMethod method = SubsampleMethod::RecursiveHalving;
    bool certified = false;
    bool search_failure = false;
    std::string note;
};

/// Recomputes the certification flag from an eigen-solve, never from search state.
inline void certify_subsample(SubsampleResult& res, const FiniteFrame& frame, std::size_t m) {
    res.achieved_bounds = subset_bounds(frame, res.J);
    const double n = static_cast<double>(frame.size());
    const double lo = res.budget.c2 * static_cast<double>(m) / n;
    const double hi = res.budget.c3 * static_cast<double>(m) / n;
    const double tol = 1e-12 * std::max(1.0, frame.beta);
    res.certified = static_cast<double>(res.J.size()) <= res.budget.c1 * static_cast<double>(m) &&
                    res.achieved_bounds.first >= lo - tol && res.achieved_bounds.second <= hi + tol;
}

struct HalvingOptions {
    std::size_t brute_force_limit = 14;
    int restarts = 50;
    uint64_t seed = 0;
    int jobs = 1;
};

/**
 * Partition-and-keep-smaller driver. With delta = k1 m/n below the schedule
 * threshold it runs the L+1 theoretical steps; otherwise (the regime where
 * the halving proof is vacuous and J = [n] already certifies) it halves
 * greedily while the certification bracket survives, reverting the step that
 * breaks it.
 */
inline SubsampleResult recursive_halving(const FiniteFrame& frame, double k1, double k2,
                                         double k3, std::size_t m,
                                         const HalvingOptions& opts = {}) {
    const std::size_t n = frame.size();
    if (m < 1 || m > n) throw range_error("recursive_halving: need 1 <= m <= n");
    const double ratio = static_cast<double>(n) / static_cast<double>(m);
    const double delta = k1 * static_cast<double>(m) / static_cast<double>(n);
    const double slack = 1.0 + 1e-9;
    if (frame.norm_bound > delta * slack)
        throw precondition_error("recursive_halving: max ||u_i||^2 exceeds k1 m/n");
    if (frame.alpha < k2 / slack || frame.beta > k3 * slack)
        throw precondition_error("recursive_halving: frame bounds violate (k2, k3)");

    SubsampleResult res;
    res.budget = constant_budget(k1, k2, k3, ratio);
    res.method = SubsampleMethod::RecursiveHalving;
    std::vector<std::size_t> J(n);
    for (std::size_t i = 0; i < n; ++i) J[i] = i;

    const auto partition_step = [&](const std::vector<std::size_t>& current, double lo, double hi,
                                    std::size_t step) -> std::optional<std::vector<std::size_t>> {
        CMat rows(current.size(), frame.dim());
        for (std::size_t i = 0; i < current.size(); ++i) rows.row(i) = frame.vectors.row(current[i]);
        FiniteFrame sub = make_frame(std::move(rows));
        PartitionResult part;
        if (current.size() <= opts.brute_force_limit) {
            part = brute_force_partition(sub, opts.jobs);
            // brute force judges feasibility by its own Cor-2.2 bounds; re-check
            // against the schedule bracket we actually need
            const double tol = 1e-9 * std::max(1.0, frame.beta);
            part.feasible = detail::within(part.bounds1, lo, hi, tol) &&
                            detail::within(part.bounds2, lo, hi, tol);
        } else {
            part = local_search_partition(sub, lo, hi, opts.restarts,
                                          derive_seed(opts.seed, step));
        }
        if (!part.feasible) return std::nullopt;
        const auto& keep_local = [&]() -> const std::vector<std::size_t>& {
            if (part.S1.size() != part.S2.size())
                return part.S1.size() < part.S2.size() ? part.S1 : part.S2;
            // size tie: keep the class containing the smallest current index
            return std::find(part.S1.begin(), part.S1.end(), std::size_t{0}) != part.S1.end()
                       ? part.S1
                       : part.S2;
        }();
        std::vector<std::size_t> next;
        next.reserve(keep_local.size());
        for (std::size_t local : keep_local) next.push_back(current[local]);
        return next;
    };

    const double zz = 2.0 * zeta_weaver;
    if (delta < k2 / (zz * zz)) {
        const AlphaBetaSchedule schedule = alpha_beta_recursion(delta, k2, k3);
        for (std::size_t l = 0; l <= schedule.L; ++l) {
            auto next = partition_step(J, schedule.alphas[l + 1], schedule.betas[l + 1], l);
            if (!next) {
                res.search_failure = true;
                res.note = "partition search failed at schedule step " + std::to_string(l);
                break;
            }
            J = std::move(*next);
        }
    } else {
        // certification bracket for the whole result; halve while it survives
        const double lo = res.budget.c2 * static_cast<double>(m) / static_cast<double>(n);
        const double hi = res.budget.c3 * static_cast<double>(m) / static_cast<double>(n);
        std::size_t step = 0;
        while (J.size() >= 2 * m) {
            auto next = partition_step(J, lo, hi, step++);
            if (!next) break; // revert: J unchanged, previous bracket still certified
            J = std::move(*next);
        }
    }

    res.J = std::move(J);
    std::sort(res.J.begin(), res.J.end());
    certify_subsample(res, frame, m);
    return res;
}

struct BarrierGreedyParams {
    double a_u = 3.0;  ///< upper barrier shift per step, scaled by 1/pool
    double b_u = 4.0;  ///< initial upper barrier, scaled by m/pool
    double a_l = 0.7;  ///< lower barrier shift per step
    double b_l = 2.5;  ///< initial lower barrier offset
    int batch = 128;
};

/**
 * Deterministic two-sided barrier greedy on the whitened pool. Batched
 * candidate scoring with a rotating start; the first batch containing a
 * feasible pick supplies the best-margin winner. Barrier shifts depend only
 * on (pool, m), so pick orders are nested across target sizes.
 */
inline SubsampleResult barrier_greedy_subsample(const FiniteFrame& frame, std::size_t target_size,
                                                const BarrierGreedyParams& params = {}) {
    const std::size_t n = frame.size();
    const std::size_t m = frame.dim();
    if (target_size < m) throw range_error("barrier_greedy_subsample: target_size >= m required");
    if (!(frame.alpha > 0.0))
        throw precondition_error("barrier_greedy_subsample: frame must span the space");

    SubsampleResult res;
    res.method = SubsampleMethod::BarrierGreedy;
    const double ratio = static_cast<double>(n) / static_cast<double>(m);
    const double k1 = frame.norm_bound * ratio;
    res.budget = constant_budget(k1, frame.alpha, frame.beta, ratio);

    // whiten: with S the total Gram, rows of V S^{-1/2} sum to the identity
    const CMat S = frame.vectors.adjoint() * frame.vectors;
    Eigen::SelfAdjointEigenSolver<CMat> es(S);
    const RVec evals = es.eigenvalues();
    CVec inv_sqrt(evals.size());
    for (Eigen::Index i = 0; i < evals.size(); ++i) {
        if (!(evals(i) > 0.0))
            throw precondition_error("barrier_greedy_subsample: frame must span the space");
        inv_sqrt(i) = Complex(1.0 / std::sqrt(evals(i)), 0.0);
    }
    const CMat S_inv_half = es.eigenvectors() * inv_sqrt.asDiagonal() * es.eigenvectors().adjoint();
    const CMat W = frame.vectors * S_inv_half; // rows w_i, sum w_i (x) w_i = I

    const double P = static_cast<double>(n);
    const double du = params.a_u / P, dl = params.a_l / P;
    double u = params.b_u * static_cast<double>(m) / P;
    double l = -params.b_l * static_cast<double>(m) / P;

    CMat A = CMat::Zero(m, m);
    const CMat I = CMat::Identity(m, m);
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    std::vector<std::size_t> picks;
    const std::size_t T = std::min(target_size, n);
    picks.reserve(T);

    const auto chol_trace = [&](const CMat& M, double& tr1, Eigen::LLT<CMat>& llt) -> bool {
        llt.compute(M);
        if (llt.info() != Eigen::Success) return false;
        const CMat Linv =
            llt.matrixL().solve(CMat::Identity(m, m)); // tr M^{-1} = ||L^{-1}||_F^2
        tr1 = Linv.squaredNorm();
        return true;
    };

    for (std::size_t t = 0; t < T && !pool.empty(); ++t) {
        double u_next = u + du, l_next = l + dl;
        Eigen::LLT<CMat> llt_u, llt_un, llt_l, llt_ln;
        double phi_u, phi_un, phi_l, phi_ln;
        if (!chol_trace(u * I - A, phi_u, llt_u)) {
            // upper barrier overtaken by a best-effort pick: retreat
            u = hermitian_extremal_eigs(CMat(A)).second + static_cast<double>(m) / P;
            u_next = u + du;
            res.search_failure = true;
            chol_trace(u * I - A, phi_u, llt_u);
        }
        if (!chol_trace(u_next * I - A, phi_un, llt_un))
            throw internal_error("upper barrier factorization failed after retreat");
        if (!chol_trace(A - l * I, phi_l, llt_l) ||
            !chol_trace(A - l_next * I, phi_ln, llt_ln)) {
            // lower barrier overtaken: retreat below lambda_min
            l = hermitian_extremal_eigs(CMat(A)).first - static_cast<double>(m) / P;
            l_next = l + dl;
            res.search_failure = true;
            chol_trace(A - l * I, phi_l, llt_l);
            if (!chol_trace(A - l_next * I, phi_ln, llt_ln))
                throw internal_error("lower barrier factorization failed after retreat");
        }
        const double denom_u = std::max(phi_u - phi_un, 1e-300);
        const double denom_l = std::max(phi_ln - phi_l, 1e-300);

        const std::size_t batch = static_cast<std::size_t>(std::max(params.batch, 1));
        const std::size_t nbatches = (pool.size() + batch - 1) / batch;
        const std::size_t start_batch = nbatches == 0 ? 0 : t % nbatches;
        std::size_t best_pos = pool.size();
        double best_margin = -std::numeric_limits<double>::infinity();
        bool best_feasible = false;
        for (std::size_t bi = 0; bi < nbatches; ++bi) {
            const std::size_t b = (start_batch + bi) % nbatches;
            const std::size_t lo_idx = b * batch;
            const std::size_t hi_idx = std::min(pool.size(), lo_idx + batch);
            const std::size_t width = hi_idx - lo_idx;
            CMat C(m, width);
            for (std::size_t j = 0; j < width; ++j) C.col(j) = W.row(pool[lo_idx + j]).adjoint();
            // q1 = w^H M^{-1} w, q2 = w^H M^{-2} w via triangular solves
            const CMat Yu = llt_un.matrixL().solve(C);
            const CMat Zu = llt_un.matrixL().adjoint().solve(Yu);
            const CMat Yl = llt_ln.matrixL().solve(C);
            const CMat Zl = llt_ln.matrixL().adjoint().solve(Yl);
            for (std::size_t j = 0; j < width; ++j) {
                const double q1u = Yu.col(j).squaredNorm();
                const double q2u = Zu.col(j).squaredNorm();
                const double q1l = Yl.col(j).squaredNorm();
                const double q2l = Zl.col(j).squaredNorm();
                const double U = q2u / denom_u + q1u;
                const double Lw = q2l / denom_l - q1l;
                const double margin = std::min(1.0 - U, Lw - 1.0);
                const bool feasible = U <= 1.0 && Lw >= 1.0;
                if ((feasible && !best_feasible) ||
                    (feasible == best_feasible && margin > best_margin)) {
                    best_feasible = feasible;
                    best_margin = margin;
                    best_pos = lo_idx + j;
                }
            }
            if (best_feasible) break; // first feasible batch wins
        }
        if (best_pos == pool.size()) break; // pool empty
        if (!best_feasible) res.search_failure = true;
        const std::size_t chosen = pool[best_pos];
        A.selfadjointView<Eigen::Lower>().rankUpdate(W.row(chosen).adjoint(), 1.0);
        A = A.selfadjointView<Eigen::Lower>();
        picks.push_back(chosen);
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(best_pos));
        u = u_next;
        l = l_next;
    }

    res.J = std::move(picks);
    std::sort(res.J.begin(), res.J.end());
    certify_subsample(res, frame, m);
    return res;
}

struct RemarkConstantChain {
    std::size_t n_of_2 = 0;   ///< smallest n with 2 <= n/(40 log n)
    double kappa = 0.0;       ///< (1+sqrt(5))/2
    double prob_sum = 0.0;    ///< (1-2/497) + (1-2^{3/4}/497), must exceed 1
    double c1 = 0.0;          ///< 1 + (4/5) kappa^2
    double c2 = 0.0;          ///< 2 (2+sqrt(2))^2
    double C2 = 0.0;          ///< 9852
    double c3 = 0.0;          ///< 1/c2
    double c4 = 0.0;          ///< 1 + 40 (497 log 496)/(496 log 497) c1 c3
    double theta = 0.0;       ///< (log 496 - log 40 - log log 496)/log 497
    double c5 = 0.0;          ///< 2 c4 / theta
    double c1_tilde = 0.0;    ///< 6568
    double c3_tilde = 0.0;    ///< 9852
    double two_c1_tilde = 0.0;
    double big_C = 0.0;       ///< 2 c5 c1_tilde
    double small_c = 0.0;     ///< 1/(4 c1_tilde)
    bool all_brackets_hold = false;
};

namespace detail {
inline std::size_t smallest_n_for_chain(std::size_t m, double factor) {
    std::size_t n = 3;
    const double fm = factor * static_cast<double>(m);
    if (fm > 3.0) {
        const double guess = fm * std::log(fm);
        if (guess > 3.0) n = static_cast<std::size_t>(guess);
    }
    while (static_cast<double>(m) > static_cast<double>(n) / (factor * std::log(static_cast<double>(n))))
        ++n;
    return n;
}
} // namespace detail

/// Recomputes the explicit-constant chain from first principles and asserts
/// every printed digit bracket.
inline RemarkConstantChain remark_constant_chain() {
    RemarkConstantChain r;
    r.n_of_2 = detail::smallest_n_for_chain(2, 40.0);
    r.kappa = 0.5 * (1.0 + std::sqrt(5.0));
    r.prob_sum = (1.0 - 2.0 / 497.0) + (1.0 - std::pow(2.0, 0.75) / 497.0);
    r.c1 = 1.0 + 0.8 * r.kappa * r.kappa;
    r.c2 = 2.0 * zeta_weaver * zeta_weaver;
    r.C2 = 9852.0;
    r.c3 = 1.0 / r.c2;
    r.c4 = 1.0 + 40.0 * (497.0 * std::log(496.0)) / (496.0 * std::log(497.0)) * r.c1 * r.c3;
    r.theta = (std::log(496.0) - std::log(40.0) - std::log(std::log(496.0))) / std::log(497.0);
    r.c5 = 2.0 * r.c4 / r.theta;
    r.c1_tilde = 6568.0;
    r.c3_tilde = 9852.0;
    r.two_c1_tilde = 2.0 * r.c1_tilde;
    r.big_C = 2.0 * r.c5 * r.c1_tilde;
    r.small_c = 1.0 / (4.0 * r.c1_tilde);
    r.all_brackets_hold =
        r.n_of_2 == 497 && r.prob_sum > 1.0 &&
        r.c1 > 3.09 && r.c1 < 3.10 &&
        r.c4 > 6.31 && r.c4 < 6.32 &&
        r.theta > 0.11 && r.theta < 0.12 &&
        r.c5 > 113.35 && r.c5 < 113.36 &&
        1642.0 * 2.0 / 0.5 == r.c1_tilde && 1642.0 * 2.0 * 1.5 / 0.5 == r.c3_tilde &&
        r.two_c1_tilde == 13136.0 && r.big_C <= 1.5e6 && r.small_c >= 3.8e-5;
    return r;
}

inline void write_frame_csv(const FiniteFrame& frame, std::ostream& out) {
    for (std::size_t j = 0; j < frame.dim(); ++j) {
        if (j) out << ',';
        out << "re" << (j + 1) << ",im" << (j + 1);
    }
    out << '\n';
    for (std::size_t i = 0; i < frame.size(); ++i) {
        for (std::size_t j = 0; j < frame.dim(); ++j) {
            if (j) out << ',';
            out << format_double(frame.vectors(i, j).real()) << ','
                << format_double(frame.vectors(i, j).imag());
        }
        out << '\n';
    }
}

inline FiniteFrame read_frame_csv(std::istream& in) {
    const auto rows = read_csv(in);
    if (rows.empty()) throw experiment_error("frame CSV is empty");
    std::size_t first = 0;
    // optional header: first cell not parseable as a number
    try {
        (void)parse_double(rows[0][0]);
    } catch (const std::exception&) {
        first = 1;
    }
    if (first >= rows.size()) throw experiment_error("frame CSV has no data rows");
    const std::size_t width = rows[first].size();
    if (width % 2 != 0) throw experiment_error("frame CSV rows need re,im pairs");
    CMat V(rows.size() - first, width / 2);
    for (std::size_t i = first; i < rows.size(); ++i) {
        if (rows[i].size() != width) throw experiment_error("frame CSV row width mismatch");
        for (std::size_t j = 0; j < width / 2; ++j)
            V(i - first, j) =
                Complex(parse_double(rows[i][2 * j]), parse_double(rows[i][2 * j + 1]));
    }
    return make_frame(std::move(V));
}

} // namespace rksample
