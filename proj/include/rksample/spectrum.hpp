#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <queue>
#include <string>
#include <unordered_set>
#include <variant>
#include <vector>

#include "rksample/errors.hpp"
#include "rksample/io.hpp"
#include "rksample/linalg.hpp"

namespace rksample {

/**
 * Mixed-smoothness Sobolev embedding on the torus [0,1)^d with uniform
 * probability: lambda_k = prod_j (1+(2*pi*|k_j|)^{2s})^{-1}, eigenfunctions
 * exp(2*pi*i k.x). Finite trace requires s > 1/2.
 */
struct TorusMixedSobolev {
    int dimension = 1;
    double smoothness = 1.0;
};

/**
 * Explicit spectrum on [-1,1] with normalized uniform measure dx/2 and
 * orthonormal Legendre eigenfunctions. Finite rank: sigma_k = 0 beyond the
 * stored length.
 */
struct LegendreSpectrum {
    std::vector<double> sigma;

    static LegendreSpectrum geometric(double ratio, int count) {
        LegendreSpectrum s;
        s.sigma.resize(count);
        double v = 1.0;
        for (int i = 0; i < count; ++i, v *= ratio) s.sigma[i] = v;
        return s;
    }
};

using KernelModel = std::variant<TorusMixedSobolev, LegendreSpectrum>;

inline int model_dimension(const KernelModel& model) {
    if (const auto* t = std::get_if<TorusMixedSobolev>(&model)) return t->dimension;
    return 1;
}

inline void validate_model(const KernelModel& model) {
    if (const auto* t = std::get_if<TorusMixedSobolev>(&model)) {
        if (t->dimension < 1) throw invalid_model_error("torus dimension must be >= 1");
        if (!(t->smoothness > 0.5))
            throw invalid_model_error("torus smoothness must exceed 1/2 (finite trace)");
        return;
    }
    const auto& sigma = std::get<LegendreSpectrum>(model).sigma;
    if (sigma.empty()) throw invalid_model_error("empty sigma sequence");
    for (std::size_t i = 0; i < sigma.size(); ++i) {
        if (!(sigma[i] > 0.0)) throw invalid_model_error("sigma must be strictly positive");
        if (i > 0 && sigma[i] > sigma[i - 1])
            throw invalid_model_error("sigma must be non-increasing");
    }
}

namespace detail {

inline double torus_weight_inv(long long k, double s) {
    if (k == 0) return 1.0;
    return 1.0 / (1.0 + std::pow(2.0 * std::numbers::pi * static_cast<double>(std::llabs(k)), 2.0 * s));
}

/// lambda_k from the sorted |k_j| so equal symmetry classes tie bitwise.
inline double torus_lambda(std::vector<int> k, double s) {
    for (auto& v : k) v = std::abs(v);
    std::sort(k.begin(), k.end(), std::greater<int>());
    double prod = 1.0;
    for (int v : k) prod *= torus_weight_inv(v, s);
    return prod;
}

/// Certified bracket for the one-dimensional torus trace
/// 1 + 2*sum_{k>=1} (1+(2 pi k)^{2s})^{-1}.
inline std::pair<double, double> torus_trace_1d(double s) {
    constexpr long long K = 2'000'000;
    double sum = 0.0;
    for (long long k = K; k >= 1; --k) sum += torus_weight_inv(k, s);
    const double twos = 2.0 * s;
    const auto tail_integral = [&](double a) {
        // int_a^inf (2 pi t)^{-2s} dt
        return std::pow(2.0 * std::numbers::pi * a, -twos) * a / (twos - 1.0);
    };
    const auto tail_integral_sq = [&](double a) {
        // int_a^inf (2 pi t)^{-4s} dt
        return std::pow(2.0 * std::numbers::pi * a, -2.0 * twos) * a / (2.0 * twos - 1.0);
    };
    // f convex decreasing: int_{K+1}^inf f <= sum_{k>K} f(k) <= int_{K+1/2}^inf f
    const double rem_hi = tail_integral(K + 0.5);
    const double rem_lo = std::max(0.0, tail_integral(K + 1.0) - tail_integral_sq(K + 1.0));
    return {1.0 + 2.0 * (sum + rem_lo), 1.0 + 2.0 * (sum + rem_hi)};
}

struct HeapEntry {
    double lambda;
    int norm_inf;
    std::vector<int> k;
};

struct HeapLess {
    bool operator()(const HeapEntry& a, const HeapEntry& b) const {
        if (a.lambda != b.lambda) return a.lambda < b.lambda;
        if (a.norm_inf != b.norm_inf) return a.norm_inf > b.norm_inf;
        return std::lexicographical_compare(b.k.begin(), b.k.end(), a.k.begin(), a.k.end());
    }
};

struct VecHash {
    std::size_t operator()(const std::vector<int>& v) const {
        std::size_t h = 0x9e3779b97f4a7c15ull;
        for (int x : v) h = (h ^ static_cast<std::size_t>(static_cast<uint32_t>(x))) * 0x100000001b3ull;
        return h;
    }
};

} // namespace detail

struct SpectralFunctionValue {
    double value = 0.0;     ///< retained part of the supremum
    double remainder = 0.0; ///< certified upper bound on the truncated rest
};

/**
 * Ordered eigensystem of the embedding Id: H(K) -> L2. sigma_k non-increasing,
 * e_k = sigma_k eta_k, 1-based indexing throughout (sigma(1) is the largest).
 * Immutable after construction.
 */
class SpectralBasis {
public:
    const KernelModel& model() const { return model_; }
    int dimension() const { return dim_; }
    std::size_t count() const { return sigma_.size(); }

    double sigma(std::size_t k) const {
        if (k < 1 || k > sigma_.size()) throw range_error("sigma index out of range");
        return sigma_[k - 1];
    }
    double lambda(std::size_t k) const { const double s = sigma(k); return s * s; }
    const std::vector<std::vector<int>>& labels() const { return labels_; }

    bool is_torus() const { return std::holds_alternative<TorusMixedSobolev>(model_); }

    /// eta_k(x) for 1-based k; x has dimension() coordinates.
    Complex eval(std::size_t k, const double* x) const {
        if (k < 1 || k > labels_.size()) throw range_error("basis index out of range");
        if (is_torus()) {
            double phase = 0.0;
            const auto& freq = labels_[k - 1];
            for (int j = 0; j < dim_; ++j) phase += freq[j] * x[j];
            return std::polar(1.0, 2.0 * std::numbers::pi * phase);
        }
        return Complex(legendre_eval_single(labels_[k - 1][0], x[0]), 0.0);
    }

    /**
     * Fills out[0..k_end-k_begin) with eta_k(x) for k in [k_begin, k_end]
     * (1-based inclusive). One recurrence pass for the Legendre model.
     */
    void eval_row(const double* x, std::size_t k_begin, std::size_t k_end, Complex* out) const {
        if (k_begin < 1 || k_end > labels_.size() || k_begin > k_end)
            throw range_error("basis index range invalid");
        if (is_torus()) {
            for (std::size_t k = k_begin; k <= k_end; ++k) {
                double phase = 0.0;
                const auto& freq = labels_[k - 1];
                for (int j = 0; j < dim_; ++j) phase += freq[j] * x[j];
                out[k - k_begin] = std::polar(1.0, 2.0 * std::numbers::pi * phase);
            }
            return;
        }
        // orthonormal Legendre up to the largest requested degree
        const int top = labels_[k_end - 1][0];
        const double t = x[0];
        double pkm1 = 0.0, pk = 1.0; // degree -1, 0
        for (int deg = 0; deg <= top; ++deg) {
            const std::size_t idx = static_cast<std::size_t>(deg) + 1; // basis index = degree+1
            if (idx >= k_begin && idx <= k_end) out[idx - k_begin] = Complex(pk, 0.0);
            const double a = std::sqrt((2.0 * deg + 1.0) * (2.0 * deg + 3.0)) / (deg + 1.0);
            const double b = deg == 0 ? 0.0
                                      : deg * std::sqrt((2.0 * deg + 3.0) / (2.0 * deg - 1.0)) / (deg + 1.0);
            const double pnext = a * t * pk - b * pkm1;
            pkm1 = pk;
            pk = pnext;
        }
    }

    /// Christoffel-type partial sum sum_{j<m} |eta_j(x)|^2.
    double christoffel(const double* x, std::size_t m) const {
        if (m < 2 || m > count() + 1) throw range_error("christoffel order out of range");
        if (is_torus()) return static_cast<double>(m - 1);
        std::vector<Complex> vals(m - 1);
        eval_row(x, 1, m - 1, vals.data());
        double s = 0.0;
        for (const auto& v : vals) s += std::norm(v);
        return s;
    }

    /// Pointwise tail sum_{j>=m} |e_j(x)|^2, exact for both model families.
    double pointwise_tail(const double* x, std::size_t m) const {
        if (m < 2) throw range_error("tail order out of range");
        if (is_torus()) {
            // |eta| == 1 pointwise: the tail equals the trace tail, and the exact
            // same stored value keeps rho_m == 1 bitwise.
            return tail_normalizer_value(m);
        }
        if (m > count()) return 0.0;
        std::vector<Complex> vals(count() - m + 1);
        eval_row(x, m, count(), vals.data());
        double s = 0.0;
        for (std::size_t j = m; j <= count(); ++j)
            s += lambda(j) * std::norm(vals[j - m]);
        return s;
    }

    double trace_lower() const { return trace_lo_; }
    double trace_upper() const { return trace_hi_; }

    /// sum_{j<m} lambda_j of the retained ordering.
    double head_lambda(std::size_t m) const {
        if (m < 1 || m > count() + 1) throw range_error("head order out of range");
        return head_prefix_[m - 1];
    }

    /// Certified bracket of sum_{j>=m} lambda_j (including mass beyond M_max).
    double tail_lambda_lower(std::size_t m) const {
        if (is_torus()) return std::max(0.0, trace_lo_ - head_lambda(m));
        return m > count() ? 0.0 : head_prefix_[count()] - head_lambda(m);
    }
    double tail_lambda_upper(std::size_t m) const {
        if (is_torus()) return std::max(0.0, trace_hi_ - head_lambda(m));
        return m > count() ? 0.0 : head_prefix_[count()] - head_lambda(m);
    }

    /// The value used as "trace - sum_{j<m} lambda_j" everywhere; midpoint of
    /// the certified bracket so numerator and denominator agree exactly.
    double tail_normalizer_value(std::size_t m) const {
        return 0.5 * (tail_lambda_lower(m) + tail_lambda_upper(m));
    }

    /// True when K(x,y) is available in closed form.
    bool has_closed_kernel() const {
        if (const auto* t = std::get_if<TorusMixedSobolev>(&model_))
            return t->smoothness == 1.0;
        return true; // finite rank
    }

    /// K(x,y); real for both model families.
    double kernel_value(const double* x, const double* y) const {
        if (const auto* t = std::get_if<TorusMixedSobolev>(&model_)) {
            if (t->smoothness != 1.0)
                throw range_error("closed-form kernel only available for s = 1");
            // sum_k exp(2 pi i k u)/(1+(2 pi k)^2) = cosh(1/2-{u})/(2 sinh(1/2))
            double prod = 1.0;
            for (int j = 0; j < dim_; ++j) {
                double u = x[j] - y[j];
                u -= std::floor(u);
                prod *= std::cosh(0.5 - u) / (2.0 * std::sinh(0.5));
            }
            return prod;
        }
        double s = 0.0;
        std::vector<Complex> vx(count()), vy(count());
        eval_row(x, 1, count(), vx.data());
        eval_row(y, 1, count(), vy.data());
        for (std::size_t k = 1; k <= count(); ++k)
            s += lambda(k) * std::real(vx[k - 1]) * std::real(vy[k - 1]);
        return s;
    }

private:
    friend SpectralBasis enumerate_spectrum(const KernelModel&, std::size_t);

    static double legendre_eval_single(int degree, double t) {
        double pkm1 = 0.0, pk = 1.0;
        for (int deg = 0; deg < degree; ++deg) {
            const double a = std::sqrt((2.0 * deg + 1.0) * (2.0 * deg + 3.0)) / (deg + 1.0);
            const double b = deg == 0 ? 0.0
                                      : deg * std::sqrt((2.0 * deg + 3.0) / (2.0 * deg - 1.0)) / (deg + 1.0);
            const double pnext = a * t * pk - b * pkm1;
            pkm1 = pk;
            pk = pnext;
        }
        return pk;
    }

    KernelModel model_;
    int dim_ = 1;
    std::vector<double> sigma_;
    std::vector<std::vector<int>> labels_;
    std::vector<double> head_prefix_; ///< head_prefix_[j] = sum of first j lambdas
    double trace_lo_ = 0.0, trace_hi_ = 0.0;
};

/**
 * The M_max largest eigenpairs in non-increasing order. For the torus model,
 * best-first expansion over Z^d from k = 0 guarantees completeness; ties are
 * broken by (||k||_inf, then lexicographic order on k).
 */
inline SpectralBasis enumerate_spectrum(const KernelModel& model, std::size_t M_max) {
    validate_model(model);
    if (M_max < 1) throw range_error("M_max >= 1 required");
    SpectralBasis basis;
    basis.model_ = model;
    basis.dim_ = model_dimension(model);

    if (const auto* torus = std::get_if<TorusMixedSobolev>(&model)) {
        const int d = torus->dimension;
        const double s = torus->smoothness;
        std::priority_queue<detail::HeapEntry, std::vector<detail::HeapEntry>, detail::HeapLess> heap;
        std::unordered_set<std::vector<int>, detail::VecHash> seen;
        const auto push = [&](std::vector<int> k) {
            if (!seen.insert(k).second) return;
            int ni = 0;
            for (int v : k) ni = std::max(ni, std::abs(v));
            heap.push({detail::torus_lambda(k, s), ni, std::move(k)});
        };
        push(std::vector<int>(d, 0));
        while (basis.sigma_.size() < M_max && !heap.empty()) {
            auto top = heap.top();
            heap.pop();
            basis.sigma_.push_back(std::sqrt(top.lambda));
            basis.labels_.push_back(top.k);
            for (int j = 0; j < d; ++j) {
                for (int step : {+1, -1}) {
                    auto nb = top.k;
                    nb[j] += step;
                    push(std::move(nb));
                }
            }
        }
        const auto [lo1, hi1] = detail::torus_trace_1d(s);
        basis.trace_lo_ = std::pow(lo1, d);
        basis.trace_hi_ = std::pow(hi1, d);
    } else {
        const auto& sig = std::get<LegendreSpectrum>(model).sigma;
        const std::size_t take = std::min(M_max, sig.size());
        basis.sigma_.assign(sig.begin(), sig.begin() + take);
        for (std::size_t k = 0; k < take; ++k)
            basis.labels_.push_back({static_cast<int>(k)});
        double tr = 0.0;
        for (double s : sig) tr += s * s; // full stored trace (finite rank)
        basis.trace_lo_ = basis.trace_hi_ = tr;
    }

    basis.head_prefix_.resize(basis.sigma_.size() + 1);
    basis.head_prefix_[0] = 0.0;
    for (std::size_t j = 0; j < basis.sigma_.size(); ++j)
        basis.head_prefix_[j + 1] = basis.head_prefix_[j] + basis.sigma_[j] * basis.sigma_[j];
    return basis;
}

/// N(m) = sup_x sum_{k<m} |eta_k(x)|^2; closed form for both models.
inline double spectral_function_N(const SpectralBasis& basis, std::size_t m) {
    if (m < 2 || m > basis.count() + 1) throw range_error("spectral_function_N: m out of range");
    if (basis.is_torus()) return static_cast<double>(m - 1);
    // maximizer at x = 1 where P~_k(1)^2 = 2k+1
    return static_cast<double>((m - 1) * (m - 1));
}

/// T(m) = sup_x sum_{k>=m} |e_k(x)|^2 with a certified truncation remainder.
inline SpectralFunctionValue spectral_function_T(const SpectralBasis& basis, std::size_t m) {
    if (m < 2 || m > basis.count() + 1) throw range_error("spectral_function_T: m out of range");
    SpectralFunctionValue out;
    if (basis.is_torus()) {
        // x-independent: sum of retained sigma_k^2 plus analytic remainder
        out.value = m > basis.count() ? 0.0 : basis.head_lambda(basis.count() + 1) - basis.head_lambda(m);
        out.remainder = std::max(0.0, basis.trace_upper() - basis.head_lambda(basis.count() + 1));
        return out;
    }
    double s = 0.0;
    for (std::size_t k = m; k <= basis.count(); ++k)
        s += basis.lambda(k) * (2.0 * (k - 1) + 1.0); // P~_{k-1}(1)^2 = 2(k-1)+1
    out.value = s;
    out.remainder = 0.0;
    return out;
}

inline std::string format_label(const std::vector<int>& label) {
    std::string s;
    for (std::size_t i = 0; i < label.size(); ++i) {
        if (i) s += ';';
        s += std::to_string(label[i]);
    }
    return s;
}

inline void write_spectrum_csv(const SpectralBasis& basis, std::ostream& out) {
    out << "k,sigma_k,sigma_k_squared,label\n";
    for (std::size_t k = 1; k <= basis.count(); ++k) {
        out << k << ',' << format_double(basis.sigma(k)) << ','
            << format_double(basis.lambda(k)) << ',' << format_label(basis.labels()[k - 1])
            << '\n';
    }
}

} // namespace rksample
