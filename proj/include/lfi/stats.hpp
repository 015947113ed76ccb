#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

#include "error.hpp"

namespace lfi::stats {

inline double mean(std::span<const double> x) {
    if (x.empty()) throw DegenerateSample("mean: empty input");
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

// Sample variance with the n-1 denominator.
inline double variance(std::span<const double> x) {
    if (x.size() < 2) throw DegenerateSample("variance: need at least two values");
    const double m = mean(x);
    double ss = 0.0;
    for (double v : x) ss += (v - m) * (v - m);
    return ss / static_cast<double>(x.size() - 1);
}

inline double sd(std::span<const double> x) { return std::sqrt(variance(x)); }

// Quantile of already-sorted data by linear interpolation between order
// statistics (Hyndman-Fan type 7).
inline double quantile_sorted(std::span<const double> sorted, double q) {
    if (sorted.empty()) throw DegenerateSample("quantile: empty input");
    q = std::clamp(q, 0.0, 1.0);
    const double h = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline double quantile(std::span<const double> x, double q) {
    std::vector<double> s(x.begin(), x.end());
    std::sort(s.begin(), s.end());
    return quantile_sorted(s, q);
}

inline double median(std::span<const double> x) { return quantile(x, 0.5); }

// Median absolute deviation about the median (unscaled).
inline double mad(std::span<const double> x) {
    const double med = median(x);
    std::vector<double> dev(x.size());
    std::transform(x.begin(), x.end(), dev.begin(), [med](double v) { return std::abs(v - med); });
    return median(dev);
}

// One-sample Kolmogorov-Smirnov statistic against a continuous CDF.
inline double ks_statistic(std::span<const double> x, const std::function<double(double)>& cdf) {
    std::vector<double> s(x.begin(), x.end());
    std::sort(s.begin(), s.end());
    const double n = static_cast<double>(s.size());
    double d = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double f = cdf(s[i]);
        d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
    }
    return d;
}

inline double ks_two_sample(std::span<const double> a, std::span<const double> b) {
    std::vector<double> x(a.begin(), a.end()), y(b.begin(), b.end());
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    const double n = static_cast<double>(x.size()), m = static_cast<double>(y.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < x.size() && j < y.size()) {
        const double t = std::min(x[i], y[j]);
        while (i < x.size() && x[i] <= t) ++i;
        while (j < y.size() && y[j] <= t) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / n - static_cast<double>(j) / m));
    }
    return d;
}

// Asymptotic Kolmogorov critical values: c(alpha) / sqrt(n_eff).
inline double ks_critical_1pct(std::size_t n) { return 1.6276 / std::sqrt(static_cast<double>(n)); }

inline double ks_critical_1pct(std::size_t n, std::size_t m) {
    const double nn = static_cast<double>(n), mm = static_cast<double>(m);
    return 1.6276 * std::sqrt((nn + mm) / (nn * mm));
}

}  // namespace lfi::stats
