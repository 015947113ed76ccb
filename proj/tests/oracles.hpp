#pragma once

// Direct-formula reference implementations used only by the tests. Each is
// written from the textbook definition, independently of the library code.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace oracle {

// min over permutations of (1/n) sum |y_i - z_pi(i)|
inline double w1_assignment(const std::vector<double>& y, std::vector<double> z) {
    std::vector<std::size_t> perm(z.size());
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += std::abs(y[i] - z[perm[i]]);
        best = std::min(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best / static_cast<double>(y.size());
}

inline double ecdf(const std::vector<double>& x, double t) {
    double c = 0.0;
    for (double v : x) c += v <= t ? 1.0 : 0.0;
    return c / static_cast<double>(x.size());
}

// N M / (N + M) * integral (F - G)^2 dH, H the pooled empirical measure.
inline double cvm_integral(const std::vector<double>& y, const std::vector<double>& z) {
    std::vector<double> pooled = y;
    pooled.insert(pooled.end(), z.begin(), z.end());
    const double n = static_cast<double>(y.size()), m = static_cast<double>(z.size());
    double s = 0.0;
    for (double h : pooled) {
        const double d = ecdf(y, h) - ecdf(z, h);
        s += d * d;
    }
    return n * m / (n + m) * s / (n + m);
}

inline double energy(const std::vector<double>& y, const std::vector<double>& z) {
    const double n = static_cast<double>(y.size()), m = static_cast<double>(z.size());
    double a = 0.0, b = 0.0, c = 0.0;
    for (double u : y)
        for (double v : z) a += std::abs(u - v);
    for (double u : y)
        for (double v : y) b += std::abs(u - v);
    for (double u : z)
        for (double v : z) c += std::abs(u - v);
    return 2.0 * a / (n * m) - b / (n * n) - c / (m * m);
}

template <class K>
double mmd2(const std::vector<double>& y, const std::vector<double>& z, K k, bool skip_cross_diagonal = false) {
    const std::size_t n = y.size();
    double yy = 0.0, zz = 0.0, yz = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (i != j) {
                yy += k(y[i], y[j]);
                zz += k(z[i], z[j]);
            }
            if (!skip_cross_diagonal || i != j) yz += k(y[i], z[j]);
        }
    const double nn = static_cast<double>(n);
    return yy / (nn * (nn - 1)) + zz / (nn * (nn - 1)) - 2.0 * yz / (nn * nn);
}

// (1/n) sum_i ln(min_j |z_i - y_j| / min_{j != i} |z_i - z_j|) + ln(n / (n - 1))
inline double kl_1nn(const std::vector<double>& y, const std::vector<double>& z) {
    const double n = static_cast<double>(z.size());
    double s = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        double nu = std::numeric_limits<double>::infinity(), rho = nu;
        for (double v : y) nu = std::min(nu, std::abs(z[i] - v));
        for (std::size_t j = 0; j < z.size(); ++j)
            if (j != i) rho = std::min(rho, std::abs(z[i] - z[j]));
        s += std::log(nu / rho);
    }
    return s / n + std::log(static_cast<double>(y.size()) / (n - 1.0));
}

// Linear-interpolation (type 7) quantile by its definition.
inline double quantile7(std::vector<double> x, double q) {
    std::sort(x.begin(), x.end());
    const double h = (static_cast<double>(x.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, x.size() - 1);
    return x[lo] + (h - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

}  // namespace oracle
