#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <vector>

#include "rksample/errors.hpp"
#include "rksample/io.hpp"
#include "rksample/rng.hpp"
#include "rksample/spectrum.hpp"

namespace rksample {

/**
 * Mixture density rho_m = 1/2 (Christoffel part + spectral tail part), each
 * half integrating to 1/2. Immutable after construction.
 */
struct SamplingDensity {
    const SpectralBasis* basis = nullptr;
    std::size_t m = 2;            ///< the operator uses m-1 basis functions
    double trace = 0.0;           ///< certified midpoint of the trace bracket
    double tail_normalizer = 0.0; ///< trace - sum_{j<m} lambda_j, strictly positive
};

inline SamplingDensity make_density(const SpectralBasis& basis, std::size_t m) {
    if (m < 2) throw range_error("density order m >= 2 required");
    if (m > basis.count()) throw range_error("density order m exceeds retained spectrum");
    SamplingDensity d;
    d.basis = &basis;
    d.m = m;
    d.trace = 0.5 * (basis.trace_lower() + basis.trace_upper());
    d.tail_normalizer = basis.tail_normalizer_value(m);
    if (!(d.tail_normalizer > 0.0))
        throw range_error("tail normalizer must be positive (spectrum exhausted at m)");
    return d;
}

inline double density_eval(const SamplingDensity& d, const double* x) {
    const double head = d.basis->christoffel(x, d.m) / static_cast<double>(d.m - 1);
    const double tail = d.basis->pointwise_tail(x, d.m) / d.tail_normalizer;
    const double val = 0.5 * (head + tail);
    if (val < -1e-14) throw internal_error("density evaluated negative beyond round-off");
    return std::max(0.0, val);
}

struct NodeSet {
    int dim = 1;
    std::size_t n = 0;
    std::vector<double> nodes;          ///< flattened row-major, nodes[i*dim + j]
    std::vector<double> density_values; ///< rho_m(x^i)
    uint64_t seed = 0;
    std::size_t m = 2;

    const double* node(std::size_t i) const { return nodes.data() + i * dim; }
};

/// Envelope sup rho_m for rejection sampling: 1e4-point grid, inflated by 1%.
inline double rejection_envelope(const SamplingDensity& d) {
    constexpr int grid = 10'000;
    double sup = 0.0;
    for (int g = 0; g <= grid; ++g) {
        const double x = -1.0 + 2.0 * g / grid;
        sup = std::max(sup, density_eval(d, &x));
    }
    return sup * 1.01;
}

/**
 * n i.i.d. draws from rho_m d rho_D. Node i uses RNG stream i of the seed, so
 * the set is reproducible and extendable without disturbing earlier nodes.
 */
inline NodeSet draw_nodes(const SamplingDensity& d, std::size_t n, uint64_t seed) {
    if (n < 1) throw range_error("draw_nodes: n >= 1 required");
    const int dim = d.basis->dimension();
    NodeSet out;
    out.dim = dim;
    out.n = n;
    out.seed = seed;
    out.m = d.m;
    out.nodes.resize(n * dim);
    out.density_values.resize(n);

    if (d.basis->is_torus()) {
        // rho_m == 1: direct uniform sampling
        for (std::size_t i = 0; i < n; ++i) {
            RngStream rng(seed, i);
            for (int j = 0; j < dim; ++j) out.nodes[i * dim + j] = rng.uniform01();
            out.density_values[i] = density_eval(d, out.node(i));
        }
        return out;
    }

    const double env = rejection_envelope(d);
    for (std::size_t i = 0; i < n; ++i) {
        RngStream rng(seed, i);
        bool accepted = false;
        for (int attempt = 0; attempt < 1'000'000; ++attempt) {
            const double x = rng.uniform(-1.0, 1.0);
            const double rho = density_eval(d, &x);
            if (rho > env)
                throw internal_error("rejection envelope violated by density value");
            if (rng.uniform01() * env <= rho) {
                out.nodes[i] = x;
                out.density_values[i] = rho;
                accepted = true;
                break;
            }
        }
        if (!accepted) throw experiment_error("rejection sampler failed to accept");
    }
    return out;
}

/// Certified bound 2 sum_{j>=m} sigma_j^2 on sup_x tail(x)/rho_m(x).
inline double transformed_tail_bound(const SamplingDensity& d) {
    return 2.0 * d.basis->tail_lambda_upper(d.m);
}

inline void write_nodes_csv(const NodeSet& ns, std::ostream& out) {
    for (int j = 0; j < ns.dim; ++j) out << 'x' << (j + 1) << ',';
    out << "rho\n";
    for (std::size_t i = 0; i < ns.n; ++i) {
        for (int j = 0; j < ns.dim; ++j) out << format_double(ns.nodes[i * ns.dim + j]) << ',';
        out << format_double(ns.density_values[i]) << '\n';
    }
}

inline NodeSet read_nodes_csv(std::istream& in, std::size_t m, uint64_t seed) {
    const auto rows = read_csv(in);
    if (rows.size() < 2) throw experiment_error("node CSV needs a header and at least one row");
    const auto& header = rows.front();
    if (header.empty() || header.back() != "rho")
        throw experiment_error("node CSV header must end with rho");
    NodeSet ns;
    ns.dim = static_cast<int>(header.size()) - 1;
    ns.n = rows.size() - 1;
    ns.m = m;
    ns.seed = seed;
    ns.nodes.resize(ns.n * ns.dim);
    ns.density_values.resize(ns.n);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].size() != header.size())
            throw experiment_error("node CSV row width mismatch");
        for (int j = 0; j < ns.dim; ++j)
            ns.nodes[(i - 1) * ns.dim + j] = parse_double(rows[i][j]);
        ns.density_values[i - 1] = parse_double(rows[i].back());
    }
    return ns;
}

} // namespace rksample
