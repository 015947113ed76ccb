#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/tools/roots.hpp>

#include "core.hpp"
#include "error.hpp"
#include "random.hpp"
#include "stats.hpp"

namespace lfi::models {

// ===========================================================================
// g-and-k quantile distribution

struct GandKParams {
    double a = 3.0;
    double b = 1.0;
    double g = 2.0;
    double k = 0.5;
    double c = 0.8;
};

namespace detail {

// b-free part of the quantile function: (1 + c tanh(g z / 2)) (1 + z^2)^k z.
// Note (1 - exp(-g z)) / (1 + exp(-g z)) = tanh(g z / 2).
inline double gandk_shape(double z, const GandKParams& p) {
    return (1.0 + p.c * std::tanh(0.5 * p.g * z)) * std::pow(1.0 + z * z, p.k) * z;
}

// d/dz of gandk_shape.
inline double gandk_shape_derivative(double z, const GandKParams& p) {
    const double t = std::tanh(0.5 * p.g * z);
    const double skew = 1.0 + p.c * t;
    const double dskew = p.c * 0.5 * p.g * (1.0 - t * t);
    const double w = 1.0 + z * z;
    const double kurt = std::pow(w, p.k) * z;
    const double dkurt = std::pow(w, p.k) + 2.0 * p.k * z * z * std::pow(w, p.k - 1.0);
    return dskew * kurt + skew * dkurt;
}

inline double standard_normal_quantile(double p) {
    return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

}  // namespace detail

// Q(z(p); theta) with z the standard normal quantile.
inline double gandk_quantile(double p, const GandKParams& theta) {
    if (!(p > 0.0 && p < 1.0)) throw InvalidParameter("gandk_quantile: p must lie in (0, 1)");
    const double z = detail::standard_normal_quantile(p);
    return theta.a + theta.b * detail::gandk_shape(z, theta);
}

inline double gandk_from_normal(double z, const GandKParams& theta) {
    return theta.a + theta.b * detail::gandk_shape(z, theta);
}

// Inversion sampling; Q applied to a standard normal draw is Q(z(U)).
inline Sample gandk_simulate(std::size_t n, const GandKParams& theta, Rng& rng) {
    std::vector<double> x(n);
    for (auto& v : x) v = gandk_from_normal(rng.normal(), theta);
    return Sample(std::move(x));
}

inline Sample gandk_simulate(std::size_t n, const GandKParams& theta, const SeedSpec& seed) {
    Rng rng(seed);
    return gandk_simulate(n, theta, rng);
}

inline constexpr double gandk_z_bracket = 12.0;

// True iff Q is strictly increasing on a fine z grid over the root bracket.
// With c <= 0.83 and k >= 0, Q is increasing for every g and the scan is skipped.
inline bool gandk_is_monotone(const GandKParams& theta) {
    if (!(theta.b > 0.0)) return false;
    if (theta.k >= 0.0 && theta.c >= 0.0 && theta.c <= 0.83) return true;
    for (int i = 0; i <= 2400; ++i) {
        const double z = -gandk_z_bracket + 0.01 * i;
        if (!(detail::gandk_shape_derivative(z, theta) > 0.0)) return false;
    }
    return true;
}

// Solve Q(z) = x for z by bracketed root finding on [-12, 12].
// Returns +/-infinity when x lies beyond Q(+/-12).
inline double gandk_invert(double x, const GandKParams& theta) {
    const double target = (x - theta.a) / theta.b;
    auto f = [&](double z) { return detail::gandk_shape(z, theta) - target; };
    const double lo = -gandk_z_bracket, hi = gandk_z_bracket;
    const double flo = f(lo), fhi = f(hi);
    if (flo > 0.0) return -std::numeric_limits<double>::infinity();
    if (fhi < 0.0) return std::numeric_limits<double>::infinity();
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    std::uintmax_t max_iter = 200;
    auto tol = [](double a, double b) { return std::abs(b - a) <= 1e-12 * std::max(1.0, std::abs(a)); };
    const auto r = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi, tol, max_iter);
    return 0.5 * (r.first + r.second);
}

// log density: log phi(z) - log(b Q'(z)) at the z solving Q(z) = x.
inline double gandk_logpdf(double x, const GandKParams& theta) {
    if (!gandk_is_monotone(theta)) throw InvalidParameter("gandk_logpdf: quantile function not monotone");
    const double z = gandk_invert(x, theta);
    if (!std::isfinite(z)) return neg_inf;
    const double log_phi = -0.5 * z * z - 0.5 * std::log(2.0 * std::numbers::pi);
    return log_phi - std::log(theta.b * detail::gandk_shape_derivative(z, theta));
}

// Sum of log densities; the monotonicity check runs once.
inline double gandk_loglik(std::span<const double> x, const GandKParams& theta) {
    if (!gandk_is_monotone(theta)) throw InvalidParameter("gandk_loglik: quantile function not monotone");
    double total = 0.0;
    for (double v : x) {
        const double z = gandk_invert(v, theta);
        if (!std::isfinite(z)) return neg_inf;
        total += -0.5 * z * z - 0.5 * std::log(2.0 * std::numbers::pi) -
                 std::log(theta.b * detail::gandk_shape_derivative(z, theta));
    }
    return total;
}

// ===========================================================================
// M/G/1 queue

struct Mg1Params {
    double service_lo = 1.0;   // theta1
    double service_hi = 5.0;   // theta2
    double arrival_rate = 0.2; // theta3
};

inline constexpr std::size_t mg1_default_customers = 51;

// Queue starts empty at time 0. For each customer: inter-arrival draw, then
// service draw. Returns the n_customers - 1 inter-departure times.
inline Sample mg1_simulate(const Mg1Params& theta, Rng& rng, std::size_t n_customers = mg1_default_customers) {
    if (n_customers < 2) throw ConfigError("mg1_simulate: need at least two customers");
    std::vector<double> y;
    y.reserve(n_customers - 1);
    double arrival = 0.0, departure = 0.0;
    for (std::size_t i = 0; i < n_customers; ++i) {
        arrival += rng.exponential(theta.arrival_rate);
        const double service = rng.uniform(theta.service_lo, theta.service_hi);
        const double next = std::max(arrival, departure) + service;
        if (i > 0) y.push_back(next - departure);
        departure = next;
    }
    return Sample(std::move(y));
}

inline Sample mg1_simulate(const Mg1Params& theta, const SeedSpec& seed,
                           std::size_t n_customers = mg1_default_customers) {
    Rng rng(seed);
    return mg1_simulate(theta, rng, n_customers);
}

// ===========================================================================
// Stereological extremes

struct StereoParams {
    double rate = 100.0;   // lambda, Poisson mean of the inclusion count
    double scale = 2.0;    // sigma, GPD scale
    double shape = -0.1;   // xi, GPD shape
};

inline constexpr double stereo_threshold = 5.0;

struct StereoData {
    std::vector<double> sizes;

    [[nodiscard]] std::size_t count() const { return sizes.size(); }
};

// GPD exceedance by inverse CDF: sigma (u^-xi - 1) / xi, or -sigma ln u at xi = 0.
inline double gpd_draw(double scale, double shape, Rng& rng) {
    const double u = rng.uniform();
    if (shape == 0.0) return -scale * std::log(u);
    return scale * std::expm1(-shape * std::log(u)) / shape;
}

inline std::vector<double> stereo_sizes(std::size_t count, double scale, double shape, Rng& rng) {
    std::vector<double> s(count);
    for (auto& v : s) v = stereo_threshold + gpd_draw(scale, shape, rng);
    return s;
}

inline StereoData stereo_simulate(const StereoParams& theta, Rng& rng) {
    if (!(theta.rate > 0.0) || !(theta.scale > 0.0)) throw InvalidParameter("stereo_simulate: rate and scale must be positive");
    const auto n = static_cast<std::size_t>(rng.poisson(theta.rate));
    return {stereo_sizes(n, theta.scale, theta.shape, rng)};
}

inline StereoData stereo_simulate(const StereoParams& theta, const SeedSpec& seed) {
    Rng rng(seed);
    return stereo_simulate(theta, rng);
}

// ===========================================================================
// Symmetric alpha-stable variates (Chambers-Mallows-Stuck, beta = 0)

inline double stable_sample(double alpha, double scale, Rng& rng) {
    if (!(alpha > 0.0 && alpha <= 2.0) || !(scale > 0.0))
        throw InvalidParameter("stable_sample: need 0 < alpha <= 2 and scale > 0");
    const double v = std::numbers::pi * (rng.uniform() - 0.5);
    const double w = rng.exponential(1.0);
    if (alpha == 1.0) return scale * std::tan(v);
    const double x = std::sin(alpha * v) / std::pow(std::cos(v), 1.0 / alpha) *
                     std::pow(std::cos(v - alpha * v) / w, (1.0 - alpha) / alpha);
    return scale * x;
}

// ===========================================================================
// Toad movement, random-return model

struct ToadParams {
    double alpha = 1.7;
    double scale = 35.0;
    double p0 = 0.6;
};

// Row-major n_days x n_toads matrix of refuge locations; NaN marks missing.
struct ToadData {
    std::size_t n_days = 0;
    std::size_t n_toads = 0;
    std::vector<double> locations;

    [[nodiscard]] double at(std::size_t day, std::size_t toad) const { return locations[day * n_toads + toad]; }
    double& at(std::size_t day, std::size_t toad) { return locations[day * n_toads + toad]; }
};

inline constexpr std::size_t toad_default_toads = 66;
inline constexpr std::size_t toad_default_days = 63;

// Every toad starts at 0. Each night it moves by a stable step from its current
// refuge; with probability p0 it then returns to one of its earlier refuges,
// chosen proportional to visit counts (a uniformly chosen earlier day), else
// it takes refuge where it stands.
inline ToadData toad_simulate(const ToadParams& theta, Rng& rng, std::size_t n_toads = toad_default_toads,
                              std::size_t n_days = toad_default_days) {
    if (!(theta.p0 >= 0.0 && theta.p0 <= 1.0)) throw InvalidParameter("toad_simulate: p0 must lie in [0, 1]");
    ToadData data{n_days, n_toads, std::vector<double>(n_days * n_toads, 0.0)};
    for (std::size_t t = 0; t < n_toads; ++t) {
        for (std::size_t d = 1; d < n_days; ++d) {
            const double step = stable_sample(theta.alpha, theta.scale, rng);
            if (rng.uniform() < theta.p0) {
                data.at(d, t) = data.at(rng.below(d), t);
            } else {
                data.at(d, t) = data.at(d - 1, t) + step;
            }
        }
    }
    return data;
}

inline ToadData toad_simulate(const ToadParams& theta, const SeedSpec& seed, std::size_t n_toads = toad_default_toads,
                              std::size_t n_days = toad_default_days) {
    Rng rng(seed);
    return toad_simulate(theta, rng, n_toads, n_days);
}

inline constexpr std::array<std::size_t, 4> toad_lags{1, 2, 4, 8};
inline constexpr double toad_return_threshold = 10.0;

struct ToadLagSummary {
    std::size_t lag = 0;
    std::size_t returns = 0;
    std::vector<double> non_returns;
};

using ToadSummary = std::array<ToadLagSummary, 4>;

// Per lag: |Y(i, j) - Y(i + L, j)|; below 10 m is a return, otherwise the
// displacement is kept as a non-return. Pairs with a missing end are skipped.
inline ToadSummary toad_summarize(const ToadData& y) {
    ToadSummary out;
    for (std::size_t li = 0; li < toad_lags.size(); ++li) {
        const std::size_t lag = toad_lags[li];
        auto& s = out[li];
        s.lag = lag;
        for (std::size_t j = 0; j < y.n_toads; ++j)
            for (std::size_t i = 0; i + lag < y.n_days; ++i) {
                const double a = y.at(i, j), b = y.at(i + lag, j);
                if (std::isnan(a) || std::isnan(b)) continue;
                const double d = std::abs(a - b);
                if (d < toad_return_threshold)
                    ++s.returns;
                else
                    s.non_returns.push_back(d);
            }
    }
    return out;
}

inline constexpr std::size_t toad_summary_dim = 48;

// Per lag: log differences of the 0, 0.1, ..., 1 quantiles of the non-returns,
// their median, and the returns count.
inline std::vector<double> toad_quantile_summaries(const ToadSummary& s) {
    std::vector<double> out;
    out.reserve(toad_summary_dim);
    for (const auto& lag : s) {
        if (lag.non_returns.size() < 11)
            throw SummaryFailure("toad_quantile_summaries: fewer than 11 non-returns at lag " + std::to_string(lag.lag));
        std::vector<double> sorted = lag.non_returns;
        std::sort(sorted.begin(), sorted.end());
        std::array<double, 11> q{};
        for (std::size_t k = 0; k <= 10; ++k) q[k] = stats::quantile_sorted(sorted, static_cast<double>(k) / 10.0);
        for (std::size_t k = 0; k < 10; ++k) {
            const double diff = q[k + 1] - q[k];
            if (!(diff > 0.0)) throw SummaryFailure("toad_quantile_summaries: repeated quantile");
            out.push_back(std::log(diff));
        }
        out.push_back(stats::quantile_sorted(sorted, 0.5));
        out.push_back(static_cast<double>(lag.returns));
    }
    return out;
}

}  // namespace lfi::models
