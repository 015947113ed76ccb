#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "stats.hpp"

// Discrepancies between two empirical samples of scalar observations.
//
// The estimators here assume equal sample sizes and reject anything else;
// DistanceSpec::allow_unequal routes to the standard two-sample generalisations
// for data whose size is itself random (inclusion counts, toad non-returns).

namespace lfi::distances {

namespace detail {

inline void require_same_length(std::span<const double> y, std::span<const double> z, const char* who) {
    if (y.size() != z.size())
        throw LengthMismatch(std::string(who) + ": samples must have equal length (" + std::to_string(y.size()) +
                             " vs " + std::to_string(z.size()) + ")");
    if (y.empty()) throw DegenerateSample(std::string(who) + ": empty samples");
}

inline std::vector<double> sorted_copy(std::span<const double> x) {
    std::vector<double> s(x.begin(), x.end());
    std::sort(s.begin(), s.end());
    return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Wasserstein-1

// Mean absolute difference of the order statistics.
inline double wasserstein1(std::span<const double> y, std::span<const double> z) {
    detail::require_same_length(y, z, "wasserstein1");
    const auto ys = detail::sorted_copy(y);
    const auto zs = detail::sorted_copy(z);
    double sum = 0.0;
    for (std::size_t i = 0; i < ys.size(); ++i) sum += std::abs(ys[i] - zs[i]);
    return sum / static_cast<double>(ys.size());
}

// Integral of |F_y - F_z| over the pooled support; valid for any sizes.
inline double wasserstein1_general(std::span<const double> y, std::span<const double> z) {
    if (y.empty() || z.empty()) throw DegenerateSample("wasserstein1: empty samples");
    const auto ys = detail::sorted_copy(y);
    const auto zs = detail::sorted_copy(z);
    const double n = static_cast<double>(ys.size()), m = static_cast<double>(zs.size());
    std::size_t i = 0, j = 0;
    double prev = std::min(ys.front(), zs.front());
    double total = 0.0;
    while (i < ys.size() || j < zs.size()) {
        const double t = (j == zs.size() || (i < ys.size() && ys[i] <= zs[j])) ? ys[i] : zs[j];
        total += std::abs(static_cast<double>(i) / n - static_cast<double>(j) / m) * (t - prev);
        prev = t;
        while (i < ys.size() && ys[i] <= t) ++i;
        while (j < zs.size() && zs[j] <= t) ++j;
    }
    return total;
}

// ---------------------------------------------------------------------------
// Cramer-von Mises

// Two-sample CvM statistic from pooled ranks (Anderson's form, valid for any
// sizes N, M):
//   T = U / (N M (N+M)) - (4 M N - 1) / (6 (M + N)),
//   U = N sum_i (r_i - i)^2 + M sum_j (s_j - j)^2.
// Exact ties across samples place the observed value first. The rank sums are
// accumulated in integers, so the result depends only on the pooled ordering.
inline double cvm_general(std::span<const double> y, std::span<const double> z) {
    if (y.empty() || z.empty()) throw DegenerateSample("cvm: empty samples");
    const auto ys = detail::sorted_copy(y);
    const auto zs = detail::sorted_copy(z);
    const auto n = static_cast<std::int64_t>(ys.size());
    const auto m = static_cast<std::int64_t>(zs.size());
    std::int64_t sum_y = 0, sum_z = 0;
    std::int64_t i = 0, j = 0, rank = 0;
    while (i < n || j < m) {
        ++rank;
        if (j == m || (i < n && ys[static_cast<std::size_t>(i)] <= zs[static_cast<std::size_t>(j)])) {
            ++i;
            sum_y += (rank - i) * (rank - i);
        } else {
            ++j;
            sum_z += (rank - j) * (rank - j);
        }
    }
    const double nn = static_cast<double>(n), mm = static_cast<double>(m);
    const double u = nn * static_cast<double>(sum_y) + mm * static_cast<double>(sum_z);
    return u / (nn * mm * (nn + mm)) - (4.0 * mm * nn - 1.0) / (6.0 * (mm + nn));
}

inline double cvm_distance(std::span<const double> y, std::span<const double> z) {
    detail::require_same_length(y, z, "cvm_distance");
    return cvm_general(y, z);
}

// ---------------------------------------------------------------------------
// Energy distance (V-statistic)

// The p-norm of a scalar difference is its absolute value, so for univariate
// data every order p >= 1 gives the same statistic; p is validated only.
inline double energy_general(std::span<const double> y, std::span<const double> z, int p = 1) {
    if (p < 1) throw ConfigError("energy_distance: order p must be >= 1");
    if (y.empty() || z.empty()) throw DegenerateSample("energy_distance: empty samples");
    const double n = static_cast<double>(y.size()), m = static_cast<double>(z.size());
    double cross = 0.0;
    for (double a : y)
        for (double b : z) cross += std::abs(a - b);
    auto within = [](std::span<const double> x) {
        double s = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i)
            for (std::size_t j = i + 1; j < x.size(); ++j) s += std::abs(x[i] - x[j]);
        return 2.0 * s;
    };
    const double value = 2.0 * cross / (n * m) - within(z) / (m * m) - within(y) / (n * n);
    return std::max(value, 0.0);
}

inline double energy_distance(std::span<const double> y, std::span<const double> z, int p = 1) {
    detail::require_same_length(y, z, "energy_distance");
    return energy_general(y, z, p);
}

// ---------------------------------------------------------------------------
// Maximum mean discrepancy (U-statistic)

enum class KernelType { gaussian, laplace };

struct Kernel {
    KernelType type = KernelType::gaussian;
    double sigma = 1.0;

    // gaussian: exp(-d^2 / (2 sigma^2)); laplace: exp(-|d| / sigma)
    [[nodiscard]] double operator()(double a, double b) const {
        const double d = a - b;
        return type == KernelType::gaussian ? std::exp(-d * d / (2.0 * sigma * sigma)) : std::exp(-std::abs(d) / sigma);
    }
};

// all_pairs: cross term over every (i, j); matches -2 E k(Y, Z).
// exclude_diagonal: cross term skips i == j, as in the literal display.
enum class MmdCross { all_pairs, exclude_diagonal };

inline double mmd2_general(std::span<const double> y, std::span<const double> z, const Kernel& k,
                           MmdCross cross_mode = MmdCross::all_pairs) {
    if (!(k.sigma > 0.0)) throw ConfigError("mmd2: bandwidth must be positive");
    if (y.size() < 2 || z.size() < 2) throw DegenerateSample("mmd2: need at least two observations per sample");
    if (cross_mode == MmdCross::exclude_diagonal && y.size() != z.size())
        throw LengthMismatch("mmd2: diagonal exclusion needs equal sizes");
    auto within = [&k](std::span<const double> x) {
        double s = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i)
            for (std::size_t j = i + 1; j < x.size(); ++j) s += k(x[i], x[j]);
        const double len = static_cast<double>(x.size());
        return 2.0 * s / (len * (len - 1.0));
    };
    double cross = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i)
        for (std::size_t j = 0; j < z.size(); ++j)
            if (cross_mode == MmdCross::all_pairs || i != j) cross += k(y[i], z[j]);
    const double n = static_cast<double>(y.size()), m = static_cast<double>(z.size());
    return within(y) + within(z) - 2.0 * cross / (n * m);
}

inline double mmd2(std::span<const double> y, std::span<const double> z, const Kernel& k,
                   MmdCross cross_mode = MmdCross::all_pairs) {
    detail::require_same_length(y, z, "mmd2");
    return mmd2_general(y, z, k, cross_mode);
}

// Median of |y_i - y_j| over i < j; the default MMD bandwidth.
inline double median_pairwise_distance(std::span<const double> y) {
    if (y.size() < 2) throw DegenerateSample("median_pairwise_distance: need two observations");
    std::vector<double> d;
    d.reserve(y.size() * (y.size() - 1) / 2);
    for (std::size_t i = 0; i < y.size(); ++i)
        for (std::size_t j = i + 1; j < y.size(); ++j) d.push_back(std::abs(y[i] - y[j]));
    const double med = stats::median(d);
    if (!(med > 0.0)) throw DegenerateSample("median_pairwise_distance: zero median distance");
    return med;
}

// ---------------------------------------------------------------------------
// Kullback-Leibler, 1-nearest-neighbour estimator
//
//   (1/n) sum_i ln( min_j |z_i - y_j| / min_{j != i} |z_i - z_j| ) + ln(n_y / (n_z - 1))

namespace detail {

// Distance from t to its nearest element in a sorted vector.
inline double nearest_in(const std::vector<double>& sorted, double t) {
    const auto it = std::lower_bound(sorted.begin(), sorted.end(), t);
    double best = std::numeric_limits<double>::infinity();
    if (it != sorted.end()) best = *it - t;
    if (it != sorted.begin()) best = std::min(best, t - *(it - 1));
    return best;
}

}  // namespace detail

inline double kl_1nn_general(std::span<const double> y, std::span<const double> z) {
    if (z.size() < 2 || y.empty()) throw DegenerateSample("kl_1nn: need n_z >= 2 and n_y >= 1");
    const auto ys = detail::sorted_copy(y);
    const auto zs = detail::sorted_copy(z);
    double total = 0.0;
    for (std::size_t i = 0; i < zs.size(); ++i) {
        const double num = detail::nearest_in(ys, zs[i]);
        double den = std::numeric_limits<double>::infinity();
        if (i > 0) den = zs[i] - zs[i - 1];
        if (i + 1 < zs.size()) den = std::min(den, zs[i + 1] - zs[i]);
        if (!(num > 0.0) || !(den > 0.0))
            throw DegenerateSample("kl_1nn: zero nearest-neighbour distance (tied observations)");
        total += std::log(num / den);
    }
    const double n_z = static_cast<double>(zs.size()), n_y = static_cast<double>(ys.size());
    return total / n_z + std::log(n_y / (n_z - 1.0));
}

inline double kl_1nn(std::span<const double> y, std::span<const double> z) {
    detail::require_same_length(y, z, "kl_1nn");
    return kl_1nn_general(y, z);
}

// Sum of absolute componentwise differences; used for count components.
inline double l1(std::span<const double> y, std::span<const double> z) {
    if (y.size() != z.size()) throw LengthMismatch("l1: vectors must have equal length");
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += std::abs(y[i] - z[i]);
    return s;
}

// ---------------------------------------------------------------------------
// Specification of one discrepancy and composite weighted sums.

enum class Kind { wasserstein1, cvm, energy, mmd, kl1nn, l1 };
enum class Transform { identity, log };

struct DistanceSpec {
    Kind kind = Kind::wasserstein1;
    Transform transform = Transform::identity;
    int energy_p = 1;
    Kernel kernel{};
    MmdCross mmd_cross = MmdCross::all_pairs;
    bool allow_unequal = false;
};

inline std::vector<double> apply_transform(std::span<const double> x, Transform t) {
    std::vector<double> out(x.begin(), x.end());
    if (t == Transform::log) {
        for (double& v : out) {
            if (!(v > 0.0)) throw DegenerateSample("log transform requires strictly positive data");
            v = std::log(v);
        }
    }
    return out;
}

inline double evaluate(const DistanceSpec& spec, std::span<const double> y, std::span<const double> z) {
    if (spec.transform != Transform::identity) {
        const auto ty = apply_transform(y, spec.transform);
        const auto tz = apply_transform(z, spec.transform);
        DistanceSpec raw = spec;
        raw.transform = Transform::identity;
        return evaluate(raw, ty, tz);
    }
    const bool general = spec.allow_unequal;
    switch (spec.kind) {
        case Kind::wasserstein1: return general ? wasserstein1_general(y, z) : wasserstein1(y, z);
        case Kind::cvm: return general ? cvm_general(y, z) : cvm_distance(y, z);
        case Kind::energy: return general ? energy_general(y, z, spec.energy_p) : energy_distance(y, z, spec.energy_p);
        case Kind::mmd:
            return general ? mmd2_general(y, z, spec.kernel, spec.mmd_cross) : mmd2(y, z, spec.kernel, spec.mmd_cross);
        case Kind::kl1nn: return general ? kl_1nn_general(y, z) : kl_1nn(y, z);
        case Kind::l1: return l1(y, z);
    }
    throw ConfigError("evaluate: unknown distance kind");
}

struct WeightedPart {
    DistanceSpec spec;
    double weight = 1.0;
};

struct CompositeDistance {
    std::vector<WeightedPart> parts;
};

// sum_k w_k rho_k(y_k, z_k) over aligned pieces.
inline double composite_eval(const CompositeDistance& c, std::span<const std::span<const double>> y_pieces,
                             std::span<const std::span<const double>> z_pieces) {
    if (c.parts.empty()) throw ConfigError("composite_eval: no parts");
    if (y_pieces.size() != c.parts.size() || z_pieces.size() != c.parts.size())
        throw ConfigError("composite_eval: pieces do not align with parts");
    bool any_positive = false;
    double total = 0.0;
    for (std::size_t k = 0; k < c.parts.size(); ++k) {
        const double w = c.parts[k].weight;
        if (!(w >= 0.0)) throw ConfigError("composite_eval: negative weight");
        any_positive = any_positive || w > 0.0;
        if (w == 0.0) continue;
        total += w * evaluate(c.parts[k].spec, y_pieces[k], z_pieces[k]);
    }
    if (!any_positive) throw ConfigError("composite_eval: at least one weight must be positive");
    return total;
}

// w_k = 1 / sd_k, or 1 / (1.4826 MAD_k) in robust mode.
inline std::vector<double> calibrate_weights(const std::vector<std::vector<double>>& pools, bool robust) {
    std::vector<double> w;
    w.reserve(pools.size());
    for (const auto& pool : pools) {
        if (pool.size() < 2) throw DegeneratePool("calibrate_weights: pool needs at least two values");
        const double scale = robust ? 1.4826 * stats::mad(pool) : stats::sd(pool);
        if (!(scale > 0.0) || !std::isfinite(scale))
            throw DegeneratePool(robust ? "calibrate_weights: zero MAD" : "calibrate_weights: zero standard deviation");
        w.push_back(1.0 / scale);
    }
    return w;
}

}  // namespace lfi::distances
