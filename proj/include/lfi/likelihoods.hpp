#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "core.hpp"
#include "error.hpp"
#include "random.hpp"
#include "stats.hpp"

namespace lfi::likelihoods {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// ===========================================================================
// ABC indicator-kernel estimate (m = 1)

struct AbcEstimate {
    double weight = 0.0;    // I[rho <= eps]
    double distance = 0.0;  // realised rho

    [[nodiscard]] double log_weight() const { return weight > 0.0 ? 0.0 : neg_inf; }
};

// One simulation at theta, scored against the observed data. `simulate` is
// (Rng&) -> data, `discrepancy` is (data) -> rho. The threshold is closed.
template <class Simulate, class Discrepancy>
AbcEstimate abc_loglik_estimate(double epsilon, Simulate&& simulate, Discrepancy&& discrepancy, Rng& rng) {
    if (!(epsilon > 0.0)) throw ConfigError("abc: tolerance must be positive");
    const auto z = simulate(rng);
    const double rho = discrepancy(z);
    return {rho <= epsilon ? 1.0 : 0.0, rho};
}

// ===========================================================================
// Gaussian synthetic likelihood

// log N(observed; mean, cov) of m simulated summaries (rows), with the 1/m
// covariance normalisation.
inline double gaussian_synthetic_loglik(const Vector& observed, const Matrix& simulated) {
    const auto m = simulated.rows();
    const auto d = simulated.cols();
    if (observed.size() != d) throw ConfigError("bsl: summary dimension mismatch");
    if (m < 2) throw SingularCovariance("bsl: need at least two simulations");
    const Vector mu = simulated.colwise().mean().transpose();
    const Matrix centered = simulated.rowwise() - mu.transpose();
    const Matrix cov = (centered.transpose() * centered) / static_cast<double>(m);
    Eigen::LLT<Matrix> llt(cov);
    if (llt.info() != Eigen::Success) throw SingularCovariance("bsl: simulated summary covariance is singular");
    const Matrix& l = llt.matrixL();
    for (Eigen::Index i = 0; i < d; ++i)
        if (!(l(i, i) > 1e-12 * std::sqrt(std::max(cov(i, i), 1e-300))) || !std::isfinite(l(i, i)))
            throw SingularCovariance("bsl: simulated summary covariance is singular");
    const Vector half = llt.matrixL().solve(observed - mu);
    double log_det = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) log_det += 2.0 * std::log(l(i, i));
    return -0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi) - 0.5 * log_det - 0.5 * half.squaredNorm();
}

// `simulate_summary` is (Rng&) -> Vector. Simulations are drawn in order from
// the one stream, so the estimate is a deterministic function of the seed.
template <class SimulateSummary>
double bsl_loglik(const Vector& observed, std::size_t m, SimulateSummary&& simulate_summary, Rng& rng) {
    if (m < static_cast<std::size_t>(observed.size()) + 2)
        throw ConfigError("bsl: m must be at least the summary dimension plus two");
    Matrix sims(static_cast<Eigen::Index>(m), observed.size());
    for (std::size_t i = 0; i < m; ++i) sims.row(static_cast<Eigen::Index>(i)) = simulate_summary(rng).transpose();
    return gaussian_synthetic_loglik(observed, sims);
}

// ===========================================================================
// Kernel density likelihood

// 0.9 min(sd, IQR / 1.34) N^{-1/5}.
inline double silverman_bandwidth(std::span<const double> x) {
    if (x.size() < 2) throw DegenerateSample("silverman_bandwidth: need at least two points");
    std::vector<double> s(x.begin(), x.end());
    std::sort(s.begin(), s.end());
    const double sd = stats::sd(s);
    const double iqr = stats::quantile_sorted(s, 0.75) - stats::quantile_sorted(s, 0.25);
    double spread = std::min(sd, iqr / 1.34);
    if (!(spread > 0.0)) spread = sd;
    if (!(spread > 0.0)) throw DegenerateSample("silverman_bandwidth: zero spread");
    return 0.9 * spread * std::pow(static_cast<double>(s.size()), -0.2);
}

struct KdeConfig {
    std::size_t m = 100;
    double fixed_bandwidth = 0.0;  // > 0 overrides Silverman's rule
    bool recycle = true;
};

namespace detail {

// Sum over the pool of the Gaussian kernel at (t - z) / delta, unnormalised.
inline double kernel_sum(double t, std::span<const double> pool, double delta) {
    const double inv = 1.0 / delta;
    double s = 0.0;
    for (double z : pool) {
        const double u = (t - z) * inv;
        s += std::exp(-0.5 * u * u);
    }
    return s;
}

inline constexpr double inv_sqrt_2pi = 0.39894228040143267794;

}  // namespace detail

// Gaussian KDE of the pool evaluated at t.
inline double kde_density(double t, std::span<const double> pool, double delta) {
    if (!(delta > 0.0)) throw ConfigError("kde: bandwidth must be positive");
    return detail::kernel_sum(t, pool, delta) * detail::inv_sqrt_2pi / (static_cast<double>(pool.size()) * delta);
}

// sum_i log f_hat(y_i) from m simulated datasets.
// recycle: one KDE over the concatenation of all datasets.
// otherwise: the average of per-dataset KDEs, each with its own bandwidth.
// Zero density at any observation gives -infinity.
inline double kde_loglik(std::span<const double> y, const std::vector<std::vector<double>>& datasets,
                         const KdeConfig& cfg) {
    if (datasets.empty()) throw ConfigError("kde: no simulated datasets");
    auto bandwidth = [&cfg](std::span<const double> pool) {
        return cfg.fixed_bandwidth > 0.0 ? cfg.fixed_bandwidth : silverman_bandwidth(pool);
    };
    const double m = static_cast<double>(datasets.size());
    double total = 0.0;
    if (cfg.recycle) {
        std::vector<double> pool;
        for (const auto& d : datasets) pool.insert(pool.end(), d.begin(), d.end());
        const double delta = bandwidth(pool);
        for (double t : y) {
            const double f = kde_density(t, pool, delta);
            if (!(f > 0.0)) return neg_inf;
            total += std::log(f);
        }
        return total;
    }
    std::vector<double> deltas;
    for (const auto& d : datasets) deltas.push_back(bandwidth(d));
    for (double t : y) {
        double f = 0.0;
        for (std::size_t j = 0; j < datasets.size(); ++j) f += kde_density(t, datasets[j], deltas[j]);
        f /= m;
        if (!(f > 0.0)) return neg_inf;
        total += std::log(f);
    }
    return total;
}

// Simulates m datasets with `simulate` ((Rng&) -> vector<double>) and scores y.
template <class Simulate>
double kde_loglik(std::span<const double> y, const KdeConfig& cfg, Simulate&& simulate, Rng& rng) {
    if (cfg.m < 1) throw ConfigError("kde: m must be at least 1");
    std::vector<std::vector<double>> datasets;
    datasets.reserve(cfg.m);
    for (std::size_t j = 0; j < cfg.m; ++j) datasets.push_back(simulate(rng));
    return kde_loglik(y, datasets, cfg);
}

// Discrete kernel estimate of P(N = count) from simulated counts: a Gaussian
// kernel restricted to the integers and renormalised over them.
inline double discrete_kde_logpmf(double count, std::span<const double> simulated, double bandwidth = 0.0) {
    if (simulated.empty()) throw ConfigError("discrete kde: no simulated counts");
    double h = bandwidth;
    if (!(h > 0.0)) {
        h = 0.5;
        if (simulated.size() >= 2) {
            try {
                h = std::max(0.5, silverman_bandwidth(simulated));
            } catch (const DegenerateSample&) {
            }
        }
    }
    double norm = 0.0;
    const auto reach = static_cast<long>(std::ceil(12.0 * h));
    for (long k = -reach; k <= reach; ++k) norm += std::exp(-0.5 * static_cast<double>(k * k) / (h * h));
    double p = 0.0;
    for (double c : simulated) {
        const double d = count - c;
        p += std::exp(-0.5 * d * d / (h * h)) / norm;
    }
    p /= static_cast<double>(simulated.size());
    return p > 0.0 ? std::log(p) : neg_inf;
}

}  // namespace lfi::likelihoods
