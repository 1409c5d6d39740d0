#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include "rksample/errors.hpp"
#include "rksample/rng.hpp"

namespace rksample {

using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using RMat = Eigen::MatrixXd;
using RVec = Eigen::VectorXd;
using Complex = std::complex<double>;

/// Extremal eigenvalues of a Hermitian matrix.
inline std::pair<double, double> hermitian_extremal_eigs(const CMat& a) {
    Eigen::SelfAdjointEigenSolver<CMat> es(a, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw internal_error("eigensolver failed");
    const auto& ev = es.eigenvalues();
    return {ev.minCoeff(), ev.maxCoeff()};
}

inline CVec random_complex_unit(int dim, RngStream& rng) {
    CVec v(dim);
    for (int i = 0; i < dim; ++i) v[i] = Complex(rng.gaussian(), rng.gaussian());
    const double nrm = v.norm();
    return nrm > 0 ? CVec(v / nrm) : CVec(CVec::Unit(dim, 0));
}

struct TopEig {
    double value = 0.0;      ///< largest eigenvalue (Rayleigh lower bound, converged)
    CVec vector;             ///< unit eigenvector estimate
    double residual = 0.0;   ///< ||A x - value x||, certifies |error| <= residual
    int iterations = 0;
};

/**
 * Largest eigenvalue of a Hermitian PSD operator given only matvecs,
 * by Lanczos with full reorthogonalization and a seeded restart.
 *
 * The returned value is the Rayleigh quotient of the returned vector, hence
 * never above the true maximum; `residual` bounds the distance to the
 * nearest true eigenvalue.
 */
template <typename Apply>
TopEig lanczos_top_eig(Apply&& apply, int dim, uint64_t seed,
                       double rel_tol = 1e-12, int max_iter = 0) {
    if (dim <= 0) throw range_error("lanczos: empty operator");
    if (max_iter <= 0) max_iter = std::min(dim, 600);
    TopEig best;
    for (int restart = 0; restart < 3; ++restart) {
        RngStream rng(seed, 0x4c414e43u + restart);
        std::vector<CVec> basis;
        basis.push_back(random_complex_unit(dim, rng));
        std::vector<double> alpha, beta;
        TopEig cur;
        auto ritz = [&](bool want_vector) {
            const int k = static_cast<int>(alpha.size());
            RMat t = RMat::Zero(k, k);
            for (int i = 0; i < k; ++i) {
                t(i, i) = alpha[i];
                if (i + 1 < k) t(i, i + 1) = t(i + 1, i) = beta[i];
            }
            Eigen::SelfAdjointEigenSolver<RMat> es(t);
            int top;
            es.eigenvalues().maxCoeff(&top);
            cur.value = es.eigenvalues()[top];
            const RVec s = es.eigenvectors().col(top);
            if (want_vector) {
                CVec x = CVec::Zero(dim);
                for (int i = 0; i < k; ++i) x += s[i] * basis[i];
                x.normalize();
                cur.vector = x;
            }
            return std::abs(s[k - 1]);
        };
        bool converged = false;
        for (int j = 0; j < max_iter; ++j) {
            CVec w = apply(basis[j]);
            const double a = std::real(basis[j].dot(w));
            alpha.push_back(a);
            w -= a * basis[j];
            if (j > 0) w -= beta[j - 1] * basis[j - 1];
            for (int pass = 0; pass < 2; ++pass)
                for (const auto& v : basis) w -= v.dot(w) * v;
            const double b = w.norm();
            cur.iterations = j + 1;
            const bool check = (j % 8 == 7) || b <= 1e-14 || j + 1 == max_iter;
            if (check) {
                const double tail = ritz(false);
                const double est = b * tail; // |beta_j * s_last| bounds the Ritz residual
                if (est <= rel_tol * std::max(cur.value, 1e-300) || b <= 1e-14) {
                    ritz(true);
                    converged = true;
                    break;
                }
            }
            if (b <= 1e-14) break; // invariant subspace hit
            beta.push_back(b);
            basis.push_back(w / b);
        }
        if (!converged) ritz(true);
        // true residual certificate
        CVec r = apply(cur.vector);
        cur.value = std::real(cur.vector.dot(r));
        cur.residual = (r - cur.value * cur.vector).norm();
        if (cur.value > best.value || restart == 0) best = cur;
        if (best.residual <= rel_tol * std::max(best.value, 1e-300) * 10) break;
    }
    return best;
}

/// Least-squares fit y ~ X b; returns coefficients, no regularization.
inline RVec linear_fit(const RMat& x, const RVec& y) {
    return x.colPivHouseholderQr().solve(y);
}

} // namespace rksample
