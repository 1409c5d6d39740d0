#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "rksample/errors.hpp"

namespace rksample {

struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights; ///< weights w.r.t. the stated measure
};

/**
 * Gauss-Legendre rule on [-1,1] w.r.t. the probability measure dx/2,
 * exact for polynomials up to degree 2n-1. Golub-Welsch via the symmetric
 * Jacobi matrix.
 */
inline QuadratureRule gauss_legendre(int n) {
    if (n < 1) throw range_error("gauss_legendre: n >= 1 required");
    Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
    for (int k = 1; k < n; ++k) {
        const double b = k / std::sqrt(4.0 * k * k - 1.0);
        jacobi(k - 1, k) = jacobi(k, k - 1) = b;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi);
    if (es.info() != Eigen::Success) throw internal_error("gauss_legendre eigensolver failed");
    QuadratureRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        rule.nodes[i] = es.eigenvalues()[i];
        const double v0 = es.eigenvectors()(0, i);
        rule.weights[i] = v0 * v0; // already normalized: total mass 1 for dx/2
    }
    return rule;
}

/// Equispaced rule on the torus [0,1): exact for trigonometric polynomials
/// with frequencies not divisible by n (w.r.t. uniform probability).
inline QuadratureRule torus_equispaced(int n) {
    if (n < 1) throw range_error("torus_equispaced: n >= 1 required");
    QuadratureRule rule;
    rule.nodes.resize(n);
    rule.weights.assign(n, 1.0 / n);
    for (int i = 0; i < n; ++i) rule.nodes[i] = static_cast<double>(i) / n;
    return rule;
}

} // namespace rksample
