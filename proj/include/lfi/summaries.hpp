#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "core.hpp"
#include "error.hpp"
#include "random.hpp"
#include "stats.hpp"

// Indirect-inference summaries from a univariate Gaussian-mixture auxiliary
// model. The mixture is parameterised without constraints:
//
//   phi = (w_1 .. w_{K-1}, mu_1 .. mu_K, s_1 .. s_K),   d_phi = 3K - 1
//
// with stick-breaking weights pi_k = sigmoid(w_k) prod_{j<k} (1 - sigmoid(w_j)),
// pi_K the remainder, and variances v_k = exp(s_k).

namespace lfi::summaries {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

class GaussianMixture {
public:
    GaussianMixture() = default;

    GaussianMixture(std::vector<double> weights, std::vector<double> means, std::vector<double> variances)
        : weights_(std::move(weights)), means_(std::move(means)), variances_(std::move(variances)) {
        const std::size_t k = means_.size();
        if (k == 0 || weights_.size() != k || variances_.size() != k)
            throw ConfigError("GaussianMixture: component arrays must be non-empty and aligned");
        double total = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            if (!(weights_[j] > 0.0) || !(variances_[j] > 0.0))
                throw FitFailure("GaussianMixture: weights and variances must be positive");
            total += weights_[j];
        }
        for (auto& w : weights_) w /= total;
    }

    [[nodiscard]] std::size_t components() const { return means_.size(); }
    [[nodiscard]] std::size_t dim() const { return 3 * components() - 1; }
    [[nodiscard]] const std::vector<double>& weights() const { return weights_; }
    [[nodiscard]] const std::vector<double>& means() const { return means_; }
    [[nodiscard]] const std::vector<double>& variances() const { return variances_; }

    [[nodiscard]] double log_density(double x) const {
        double mx = -std::numeric_limits<double>::infinity();
        std::vector<double> a(components());
        for (std::size_t k = 0; k < components(); ++k) {
            const double d = x - means_[k];
            a[k] = std::log(weights_[k]) - 0.5 * std::log(2.0 * std::numbers::pi * variances_[k]) -
                   0.5 * d * d / variances_[k];
            mx = std::max(mx, a[k]);
        }
        double s = 0.0;
        for (double v : a) s += std::exp(v - mx);
        return mx + std::log(s);
    }

    [[nodiscard]] double loglik(std::span<const double> x) const {
        double total = 0.0;
        for (double v : x) total += log_density(v);
        return total;
    }

    // Unconstrained coordinates phi.
    [[nodiscard]] Vector to_phi() const {
        const std::size_t k = components();
        Vector phi(static_cast<Eigen::Index>(dim()));
        double remaining = 1.0;
        for (std::size_t j = 0; j + 1 < k; ++j) {
            const double frac = std::clamp(weights_[j] / remaining, 1e-300, 1.0 - 1e-16);
            phi[static_cast<Eigen::Index>(j)] = std::log(frac) - std::log1p(-frac);
            remaining -= weights_[j];
        }
        for (std::size_t j = 0; j < k; ++j) {
            phi[static_cast<Eigen::Index>(k - 1 + j)] = means_[j];
            phi[static_cast<Eigen::Index>(2 * k - 1 + j)] = std::log(variances_[j]);
        }
        return phi;
    }

    static GaussianMixture from_phi(const Vector& phi, std::size_t k) {
        if (static_cast<std::size_t>(phi.size()) != 3 * k - 1) throw ConfigError("from_phi: dimension mismatch");
        std::vector<double> w(k), m(k), v(k);
        double remaining = 1.0;
        for (std::size_t j = 0; j + 1 < k; ++j) {
            const double s = core_sigmoid(phi[static_cast<Eigen::Index>(j)]);
            w[j] = remaining * s;
            remaining *= 1.0 - s;
        }
        w[k - 1] = remaining;
        for (std::size_t j = 0; j < k; ++j) {
            m[j] = phi[static_cast<Eigen::Index>(k - 1 + j)];
            v[j] = std::exp(phi[static_cast<Eigen::Index>(2 * k - 1 + j)]);
        }
        GaussianMixture g;
        g.weights_ = std::move(w);
        g.means_ = std::move(m);
        g.variances_ = std::move(v);
        return g;
    }

    // Reorder components by ascending mean.
    [[nodiscard]] GaussianMixture canonical() const {
        std::vector<std::size_t> idx(components());
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [this](std::size_t a, std::size_t b) { return means_[a] < means_[b]; });
        GaussianMixture g;
        for (auto i : idx) {
            g.weights_.push_back(weights_[i]);
            g.means_.push_back(means_[i]);
            g.variances_.push_back(variances_[i]);
        }
        return g;
    }

private:
    static double core_sigmoid(double x) { return lfi::detail::sigmoid(x); }

    std::vector<double> weights_;
    std::vector<double> means_;
    std::vector<double> variances_;
};

namespace detail {

// Derivatives of log pi_k with respect to the stick coordinates w. Only the
// diagonal second derivatives are non-zero.
struct StickDerivatives {
    Matrix grad;       // K x (K-1): d log pi_k / d w_j
    Matrix hess_diag;  // K x (K-1): d^2 log pi_k / d w_j^2
};

inline StickDerivatives stick_derivatives(const Vector& phi, std::size_t k) {
    StickDerivatives d{Matrix::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k - 1)),
                       Matrix::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k - 1))};
    for (std::size_t j = 0; j + 1 < k; ++j) {
        const double s = lfi::detail::sigmoid(phi[static_cast<Eigen::Index>(j)]);
        const auto jj = static_cast<Eigen::Index>(j);
        for (std::size_t c = j; c < k; ++c) {
            const auto cc = static_cast<Eigen::Index>(c);
            d.grad(cc, jj) = (c == j) ? 1.0 - s : -s;
            d.hess_diag(cc, jj) = -s * (1.0 - s);
        }
    }
    return d;
}

struct Derivatives {
    double loglik = 0.0;
    Vector grad;
    Matrix hess;
};

// Log-likelihood, gradient and (optionally) Hessian in phi, summed over x.
inline Derivatives mixture_derivatives(std::span<const double> x, const Vector& phi, std::size_t k,
                                       bool with_hessian) {
    const auto dim = static_cast<Eigen::Index>(3 * k - 1);
    const auto gm = GaussianMixture::from_phi(phi, k);
    const auto sticks = stick_derivatives(phi, k);
    const auto mu_at = [k](std::size_t c) { return static_cast<Eigen::Index>(k - 1 + c); };
    const auto s_at = [k](std::size_t c) { return static_cast<Eigen::Index>(2 * k - 1 + c); };

    Derivatives out{0.0, Vector::Zero(dim), with_hessian ? Matrix::Zero(dim, dim) : Matrix()};
    std::vector<double> a(k), r(k);
    Matrix da = Matrix::Zero(static_cast<Eigen::Index>(k), dim);  // rows: d a_c / d phi
    for (double xi : x) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c) {
            const double d = xi - gm.means()[c];
            a[c] = std::log(gm.weights()[c]) - 0.5 * std::log(2.0 * std::numbers::pi * gm.variances()[c]) -
                   0.5 * d * d / gm.variances()[c];
            mx = std::max(mx, a[c]);
        }
        double sum = 0.0;
        for (std::size_t c = 0; c < k; ++c) sum += (r[c] = std::exp(a[c] - mx));
        for (auto& v : r) v /= sum;
        out.loglik += mx + std::log(sum);

        da.setZero();
        for (std::size_t c = 0; c < k; ++c) {
            const auto cc = static_cast<Eigen::Index>(c);
            const double v = gm.variances()[c];
            const double d = xi - gm.means()[c];
            if (k > 1) da.row(cc).head(static_cast<Eigen::Index>(k - 1)) = sticks.grad.row(cc);
            da(cc, mu_at(c)) = d / v;
            da(cc, s_at(c)) = -0.5 + 0.5 * d * d / v;
        }
        Vector mean_da = Vector::Zero(dim);
        for (std::size_t c = 0; c < k; ++c) mean_da += r[c] * da.row(static_cast<Eigen::Index>(c)).transpose();
        out.grad += mean_da;

        if (!with_hessian) continue;
        for (std::size_t c = 0; c < k; ++c) {
            const auto cc = static_cast<Eigen::Index>(c);
            const double v = gm.variances()[c];
            const double d = xi - gm.means()[c];
            const Vector row = da.row(cc).transpose();
            out.hess += r[c] * (row * row.transpose());
            // second derivatives of a_c itself
            for (std::size_t j = 0; j + 1 < k; ++j) {
                const auto jj = static_cast<Eigen::Index>(j);
                out.hess(jj, jj) += r[c] * sticks.hess_diag(cc, jj);
            }
            out.hess(mu_at(c), mu_at(c)) += r[c] * (-1.0 / v);
            out.hess(mu_at(c), s_at(c)) += r[c] * (-d / v);
            out.hess(s_at(c), mu_at(c)) += r[c] * (-d / v);
            out.hess(s_at(c), s_at(c)) += r[c] * (-0.5 * d * d / v);
        }
        out.hess -= mean_da * mean_da.transpose();
    }
    return out;
}

}  // namespace detail

struct FitOptions {
    std::size_t restarts = 10;
    std::size_t max_iterations = 500;
    double tolerance = 1e-10;       // relative log-likelihood change
    double variance_floor = 1e-8;   // relative to the sample variance
    std::size_t newton_steps = 50;  // polishing after EM
};

namespace detail {

struct EmResult {
    GaussianMixture model;
    double loglik = -std::numeric_limits<double>::infinity();
    std::vector<double> trace;
};

// One EM run from the given start. Throws FitFailure on a collapsing component.
inline EmResult run_em(std::span<const double> y, GaussianMixture start, const FitOptions& opt, double floor) {
    const std::size_t k = start.components();
    const std::size_t n = y.size();
    std::vector<double> w = start.weights(), m = start.means(), v = start.variances();
    std::vector<double> resp(n * k);
    EmResult res;
    double prev = -std::numeric_limits<double>::infinity();
    for (std::size_t it = 0; it < opt.max_iterations; ++it) {
        double ll = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < k; ++c) {
                const double d = y[i] - m[c];
                resp[i * k + c] = std::log(w[c]) - 0.5 * std::log(2.0 * std::numbers::pi * v[c]) - 0.5 * d * d / v[c];
                mx = std::max(mx, resp[i * k + c]);
            }
            double s = 0.0;
            for (std::size_t c = 0; c < k; ++c) s += (resp[i * k + c] = std::exp(resp[i * k + c] - mx));
            for (std::size_t c = 0; c < k; ++c) resp[i * k + c] /= s;
            ll += mx + std::log(s);
        }
        res.trace.push_back(ll);
        const bool converged = std::isfinite(prev) && std::abs(ll - prev) <= opt.tolerance * std::abs(ll);
        prev = ll;
        for (std::size_t c = 0; c < k; ++c) {
            double nk = 0.0, sx = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                nk += resp[i * k + c];
                sx += resp[i * k + c] * y[i];
            }
            if (!(nk > 1e-8)) throw FitFailure("EM: empty mixture component");
            const double mean = sx / nk;
            double sv = 0.0;
            for (std::size_t i = 0; i < n; ++i) sv += resp[i * k + c] * (y[i] - mean) * (y[i] - mean);
            w[c] = nk / static_cast<double>(n);
            m[c] = mean;
            v[c] = sv / nk;
            if (!(v[c] > floor)) throw FitFailure("EM: mixture component variance collapsed");
        }
        if (converged) break;
    }
    res.model = GaussianMixture(w, m, v);
    res.loglik = res.model.loglik(y);
    return res;
}

// Damped Newton ascent on the log-likelihood in phi, from an EM solution.
inline GaussianMixture newton_polish(std::span<const double> y, const GaussianMixture& start, const FitOptions& opt,
                                     double floor) {
    const std::size_t k = start.components();
    Vector phi = start.to_phi();
    auto current = mixture_derivatives(y, phi, k, true);
    for (std::size_t step = 0; step < opt.newton_steps; ++step) {
        if (current.grad.lpNorm<Eigen::Infinity>() < 1e-10) break;
        Eigen::LLT<Matrix> llt(-current.hess);
        if (llt.info() != Eigen::Success) break;
        Vector dir = llt.solve(current.grad);
        double t = 1.0;
        bool improved = false;
        for (int halving = 0; halving < 30; ++halving, t *= 0.5) {
            const Vector trial = phi + t * dir;
            const auto gm = GaussianMixture::from_phi(trial, k);
            bool ok = true;
            for (std::size_t c = 0; c < k; ++c) ok = ok && gm.variances()[c] > floor && gm.weights()[c] > 0.0;
            if (!ok) continue;
            const double ll = gm.loglik(y);
            if (std::isfinite(ll) && ll >= current.loglik) {
                phi = trial;
                current = mixture_derivatives(y, phi, k, true);
                improved = true;
                break;
            }
        }
        if (!improved) break;
    }
    return GaussianMixture::from_phi(phi, k);
}

}  // namespace detail

// EM trace (log-likelihood per iteration) from one start; exposed for tests of
// EM monotonicity.
inline std::vector<double> em_trace(std::span<const double> y, const GaussianMixture& start,
                                    const FitOptions& opt = {}) {
    const double floor = opt.variance_floor * stats::variance(y);
    return detail::run_em(y, start, opt, floor).trace;
}

// Maximum-likelihood mixture: best of `restarts` seeded EM runs, polished by
// Newton steps so the score vanishes at the returned fit, then sorted by mean.
inline GaussianMixture fit_gmm(std::span<const double> y, std::size_t k, const SeedSpec& seed,
                               const FitOptions& opt = {}) {
    if (k < 1) throw ConfigError("fit_gmm: need at least one component");
    if (y.size() <= 3 * k) throw FitFailure("fit_gmm: need more than 3K observations");
    const double var = stats::variance(y);
    if (!(var > 0.0)) throw FitFailure("fit_gmm: constant data");
    const double floor = opt.variance_floor * var;
    const double mean = stats::mean(y);

    if (k == 1) {
        double ss = 0.0;
        for (double v : y) ss += (v - mean) * (v - mean);
        return GaussianMixture({1.0}, {mean}, {ss / static_cast<double>(y.size())});
    }

    Rng rng(seed);
    std::optional<detail::EmResult> best;
    for (std::size_t r = 0; r < opt.restarts; ++r) {
        // k distinct data points as means, pooled variance, equal weights
        std::vector<std::size_t> picks;
        while (picks.size() < k) {
            const auto i = static_cast<std::size_t>(rng.below(y.size()));
            if (std::find(picks.begin(), picks.end(), i) == picks.end()) picks.push_back(i);
        }
        std::vector<double> means;
        for (auto i : picks) means.push_back(y[i]);
        try {
            auto res = detail::run_em(y, GaussianMixture(std::vector<double>(k, 1.0), means, std::vector<double>(k, var)),
                                      opt, floor);
            if (!best || res.loglik > best->loglik) best = std::move(res);
        } catch (const FitFailure&) {
        }
    }
    if (!best) throw FitFailure("fit_gmm: every restart collapsed");
    auto polished = detail::newton_polish(y, best->model, opt, floor);
    return polished.canonical();
}

// Fit with k components; on a numerical failure retry once with k - 1.
inline GaussianMixture fit_gmm_with_fallback(std::span<const double> y, std::size_t k, const SeedSpec& seed,
                                             const FitOptions& opt = {}) {
    try {
        auto g = fit_gmm(y, k, seed, opt);
        // An ill-conditioned information matrix counts as a numerical issue.
        Matrix info = -detail::mixture_derivatives(y, g.to_phi(), g.components(), true).hess;
        Eigen::LLT<Matrix> llt(0.5 * (info + info.transpose()));
        if (llt.info() != Eigen::Success) throw FitFailure("fit_gmm: observed information not positive definite");
        return g;
    } catch (const FitFailure&) {
        if (k <= 1) throw;
        return fit_gmm(y, k - 1, seed, opt);
    }
}

// S(z, phi*) = d log p_A(z | phi) / d phi at phi*.
inline Vector score_at(std::span<const double> z, const GaussianMixture& fitted) {
    return detail::mixture_derivatives(z, fitted.to_phi(), fitted.components(), false).grad;
}

// Negative Hessian of the observed-data log-likelihood at the fit, symmetrised.
inline Matrix observed_information(std::span<const double> y, const GaussianMixture& fitted) {
    Matrix info = -detail::mixture_derivatives(y, fitted.to_phi(), fitted.components(), true).hess;
    info = (0.5 * (info + info.transpose())).eval();
    Eigen::LLT<Matrix> llt(info);
    if (llt.info() != Eigen::Success) throw IllConditioned("observed_information: not positive definite");
    return info;
}

// sqrt(s' J^{-1} s).
inline double mahalanobis(const Vector& s, const Matrix& j) {
    if (j.rows() != s.size() || j.cols() != s.size()) throw ConfigError("mahalanobis: dimension mismatch");
    Eigen::LLT<Matrix> llt(j);
    if (llt.info() != Eigen::Success) throw IllConditioned("mahalanobis: weighting matrix not positive definite");
    const Vector half = llt.matrixL().solve(s);
    return std::sqrt(half.squaredNorm());
}

// Score-based summary of a dataset against a mixture fitted once to the
// observed data, with the Mahalanobis weighting J(phi(y)).
class ScoreSummary {
public:
    ScoreSummary(std::span<const double> observed, std::size_t k, const SeedSpec& seed, const FitOptions& opt = {})
        : model_(fit_gmm_with_fallback(observed, k, seed, opt)),
          information_(observed_information(observed, model_)),
          observed_(score_at(observed, model_)) {}

    [[nodiscard]] const GaussianMixture& model() const { return model_; }
    [[nodiscard]] const Matrix& information() const { return information_; }
    [[nodiscard]] const Vector& observed() const { return observed_; }
    [[nodiscard]] std::size_t dim() const { return model_.dim(); }

    [[nodiscard]] Vector operator()(std::span<const double> z) const { return score_at(z, model_); }

    [[nodiscard]] double discrepancy(std::span<const double> z) const {
        return mahalanobis(score_at(z, model_) - observed_, information_);
    }

private:
    GaussianMixture model_;
    Matrix information_;
    Vector observed_;
};

}  // namespace lfi::summaries
