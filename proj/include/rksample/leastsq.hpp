#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "rksample/density.hpp"
#include "rksample/errors.hpp"
#include "rksample/linalg.hpp"
#include "rksample/spectrum.hpp"

namespace rksample {

inline constexpr double rank_tolerance = 1e-10;

/**
 * n x (m-1) evaluation matrix; weighted rows are eta_l(x^j)/sqrt(rho_m(x^j)),
 * zero row where rho_m vanishes.
 */
struct FrameMatrix {
    CMat entries;
    bool weighted = true;
    const NodeSet* nodes = nullptr;
    std::size_t m = 2;
    double tau_min = -1.0; ///< cached extremal singular values, < 0 before factorization
    double tau_max = -1.0;
};

inline FrameMatrix build_matrix(const SpectralBasis& basis, const NodeSet& nodes,
                                std::size_t m, bool weighted) {
    if (m < 2 || m - 1 > basis.count()) throw range_error("build_matrix: m out of range");
    if (nodes.n < m - 1) throw range_error("build_matrix: fewer nodes than columns");
    FrameMatrix L;
    L.weighted = weighted;
    L.nodes = &nodes;
    L.m = m;
    L.entries.resize(nodes.n, m - 1);
    std::vector<Complex> row(m - 1);
    for (std::size_t j = 0; j < nodes.n; ++j) {
        const double rho = nodes.density_values[j];
        if (weighted && rho == 0.0) {
            L.entries.row(j).setZero();
            continue;
        }
        basis.eval_row(nodes.node(j), 1, m - 1, row.data());
        const double w = weighted ? 1.0 / std::sqrt(rho) : 1.0;
        for (std::size_t l = 0; l < m - 1; ++l) L.entries(j, l) = w * row[l];
    }
    return L;
}

/**
 * Householder-QR least-squares solver; extremal singular values taken from the
 * triangular factor. The normal-equation path exists only for cross-checks.
 */
class LsqSolver {
public:
    explicit LsqSolver(CMat A) : rows_(A.rows()), cols_(A.cols()), qr_(std::move(A)) {
        CMat R = qr_.matrixQR().topRows(cols_).template triangularView<Eigen::Upper>();
        Eigen::JacobiSVD<CMat> svd(R);
        tau_max_ = svd.singularValues()(0);
        tau_min_ = svd.singularValues()(cols_ - 1);
    }

    double tau_min() const { return tau_min_; }
    double tau_max() const { return tau_max_; }
    bool full_rank() const { return tau_min_ > rank_tolerance * tau_max_; }
    Eigen::Index rows() const { return rows_; }
    Eigen::Index cols() const { return cols_; }

    CVec solve(const CVec& rhs) const {
        if (!full_rank()) throw rank_error("least-squares matrix is rank deficient");
        if (rhs.size() != rows_) throw range_error("sample vector length mismatch");
        return qr_.solve(rhs);
    }

    static CVec solve_normal(const CMat& A, const CVec& rhs) {
        const CMat G = A.adjoint() * A;
        Eigen::LDLT<CMat> ldlt(G);
        if (ldlt.info() != Eigen::Success)
            throw rank_error("normal equations not positive definite");
        return ldlt.solve(A.adjoint() * rhs);
    }

private:
    Eigen::Index rows_, cols_;
    Eigen::HouseholderQR<CMat> qr_;
    double tau_min_ = 0.0, tau_max_ = 0.0;
};

inline CVec solve_least_squares(const FrameMatrix& L, const CVec& samples,
                                bool use_normal_equations = false) {
    if (use_normal_equations) {
        if (samples.size() != L.entries.rows()) throw range_error("sample vector length mismatch");
        return LsqSolver::solve_normal(L.entries, samples);
    }
    LsqSolver solver(L.entries);
    return solver.solve(samples);
}

/// (1/tau_max, 1/tau_min) brackets ||(L*L)^{-1}L*||_{2->2}.
inline std::pair<double, double> operator_norm_bounds(const FrameMatrix& L) {
    LsqSolver solver(L.entries);
    if (!solver.full_rank()) throw rank_error("operator_norm_bounds: rank deficient");
    return {1.0 / solver.tau_max(), 1.0 / solver.tau_min()};
}

/**
 * Weighted least-squares recovery. Holds the factorization of the weighted
 * matrix; apply takes raw samples f(x^j) and weights them internally.
 */
class RecoveryOperator {
public:
    RecoveryOperator(const SpectralBasis& basis, NodeSet nodes, std::size_t m)
        : basis_(&basis), nodes_(std::move(nodes)), m_(m) {
        FrameMatrix L = build_matrix(basis, nodes_, m, /*weighted=*/true);
        solver_ = std::make_shared<LsqSolver>(std::move(L.entries));
        if (!solver_->full_rank())
            throw rank_error("recovery operator requires full column rank");
    }

    const SpectralBasis& basis() const { return *basis_; }
    const NodeSet& nodes() const { return nodes_; }
    std::size_t m() const { return m_; }
    std::size_t n_used() const { return nodes_.n; }
    const LsqSolver& solver() const { return *solver_; }

    /// Exact pseudo-inverse spectral norm 1/tau_min of the weighted matrix.
    double pinv_norm() const { return 1.0 / solver_->tau_min(); }

    CVec weight_samples(const CVec& f_samples) const {
        if (static_cast<std::size_t>(f_samples.size()) != nodes_.n)
            throw range_error("sample vector length mismatch");
        CVec g(f_samples.size());
        for (std::size_t j = 0; j < nodes_.n; ++j) {
            const double rho = nodes_.density_values[j];
            g(j) = rho == 0.0 ? Complex(0.0, 0.0) : f_samples(j) / std::sqrt(rho);
        }
        return g;
    }

    /// Coefficients (c_1, ..., c_{m-1}) of the approximant sum c_k eta_k.
    CVec apply(const CVec& f_samples) const { return solver_->solve(weight_samples(f_samples)); }

private:
    const SpectralBasis* basis_;
    NodeSet nodes_;
    std::size_t m_;
    std::shared_ptr<LsqSolver> solver_;
};

inline CVec apply_recovery(const RecoveryOperator& op, const CVec& f_samples) {
    return op.apply(f_samples);
}

} // namespace rksample
