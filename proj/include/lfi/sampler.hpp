#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <functional>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include "core.hpp"
#include "error.hpp"
#include "random.hpp"

namespace lfi::sampler {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// A (possibly noisy) log-likelihood estimate at one parameter value.
struct Estimate {
    double loglik = neg_inf;
    double distance = std::numeric_limits<double>::quiet_NaN();  // ABC only
    std::size_t simulations = 0;
};

// Produces an estimate at theta from the given stream; may throw lfi::Error.
using Backend = std::function<Estimate(const ParamVector&, Rng&)>;
// Extra support restriction on top of the prior box (always true if empty).
using Support = std::function<bool(const ParamVector&)>;

struct MhConfig {
    std::size_t iterations = 20000;
    Matrix proposal_cov;  // on the unbounded (logit) scale
    SeedSpec seed{};
    std::size_t init_attempts = 1000;
};

struct Chain {
    std::vector<std::string> names;
    std::vector<std::vector<double>> draws;  // iterations x d, original space
    std::vector<double> loglik;
    std::vector<double> distance;
    std::vector<char> accepted;
    std::vector<std::vector<double>> unbounded;  // iterations x d
    std::size_t failed_estimates = 0;
    std::size_t simulations = 0;

    [[nodiscard]] std::size_t size() const { return draws.size(); }
    [[nodiscard]] std::size_t dim() const { return names.size(); }

    [[nodiscard]] double acceptance_rate() const {
        if (accepted.empty()) return 0.0;
        return static_cast<double>(std::count(accepted.begin(), accepted.end(), 1)) /
               static_cast<double>(accepted.size());
    }

    // One parameter's trace after dropping the first `burn_in` fraction.
    [[nodiscard]] std::vector<double> component(std::size_t j, double burn_in = 0.0) const {
        const auto start = static_cast<std::size_t>(burn_in * static_cast<double>(draws.size()));
        std::vector<double> out;
        out.reserve(draws.size() - start);
        for (std::size_t i = start; i < draws.size(); ++i) out.push_back(draws[i][j]);
        return out;
    }
};

namespace detail {

inline double log_target(const ParamVector& theta, std::span<const double> x, const BoxPrior& prior, double loglik) {
    return loglik + prior.log_density(theta.values) + log_jacobian_at(x, prior);
}

}  // namespace detail

// Random-walk Metropolis-Hastings on the logit-transformed box. The estimate
// at the current state is carried forward and never refreshed, so a
// non-negative unbiased likelihood estimate (ABC) yields a pseudo-marginal
// chain. Backend failures at a proposal reject it and are counted.
inline Chain run_mh(const MhConfig& cfg, const BoxPrior& prior, const ParamVector& initial, const Backend& backend,
                    const Support& support = {}) {
    const std::size_t d = prior.dim();
    if (cfg.iterations < 1) throw ConfigError("run_mh: iterations must be at least 1");
    if (cfg.proposal_cov.rows() != static_cast<Eigen::Index>(d) || cfg.proposal_cov.cols() != static_cast<Eigen::Index>(d))
        throw ConfigError("run_mh: proposal covariance has the wrong shape");
    Eigen::LLT<Matrix> llt(0.5 * (cfg.proposal_cov + cfg.proposal_cov.transpose()));
    if (llt.info() != Eigen::Success) throw ConfigError("run_mh: proposal covariance not positive definite");
    const Matrix chol = llt.matrixL();

    Chain chain;
    chain.names = prior.names();
    chain.draws.reserve(cfg.iterations);
    chain.loglik.reserve(cfg.iterations);
    chain.accepted.reserve(cfg.iterations);
    chain.distance.reserve(cfg.iterations);
    chain.unbounded.reserve(cfg.iterations);

    auto in_support = [&](const ParamVector& t) { return !support || support(t); };
    auto estimate = [&](const ParamVector& t, Rng& rng) -> Estimate {
        try {
            Estimate e = backend(t, rng);
            chain.simulations += e.simulations;
            return e;
        } catch (const Error&) {
            ++chain.failed_estimates;
            return {};
        }
    };

    std::vector<double> x = to_unbounded(initial.values, prior).coords;
    ParamVector theta = from_unbounded(x, prior);
    if (!in_support(theta)) throw ConfigError("run_mh: initial value outside the model support");
    Estimate current;
    for (std::size_t a = 0; a < cfg.init_attempts; ++a) {
        Rng rng(cfg.seed.with_chain(cfg.seed.chain + stream::initial_state).with_proposal(a));
        current = estimate(theta, rng);
        if (current.loglik > neg_inf) break;
    }
    double current_target = detail::log_target(theta, x, prior, current.loglik);

    std::vector<double> xp(d);
    for (std::size_t t = 1; t <= cfg.iterations; ++t) {
        Rng rng(cfg.seed.with_proposal(t));
        Vector eps(static_cast<Eigen::Index>(d));
        for (std::size_t i = 0; i < d; ++i) eps[static_cast<Eigen::Index>(i)] = rng.normal();
        const Vector step = chol * eps;
        for (std::size_t i = 0; i < d; ++i) xp[i] = x[i] + step[static_cast<Eigen::Index>(i)];
        ParamVector proposal = from_unbounded(xp, prior);

        bool accept = false;
        Estimate est;
        if (in_support(proposal)) {
            est = estimate(proposal, rng);
            const double prop_target = detail::log_target(proposal, xp, prior, est.loglik);
            if (prop_target > neg_inf) {
                if (current_target == neg_inf) {
                    accept = true;
                } else {
                    accept = std::log(rng.uniform()) < prop_target - current_target;
                }
            }
            if (accept) {
                x = xp;
                theta = std::move(proposal);
                current = est;
                current_target = prop_target;
            }
        }
        chain.draws.push_back(theta.values);
        chain.unbounded.push_back(x);
        chain.loglik.push_back(current.loglik);
        chain.distance.push_back(current.distance);
        chain.accepted.push_back(accept ? 1 : 0);
    }
    return chain;
}

struct PilotOptions {
    double fraction = 0.1;      // of the main budget
    double initial_scale = 0.1; // identity proposal sd on the logit scale
    double burn_in = 0.2;       // of each pilot stage, dropped before the covariance
};

// 2.38^2 / d times the covariance of unbounded pilot draws.
inline Matrix scaled_covariance(const std::vector<std::vector<double>>& xs, std::size_t from, std::size_t d) {
    const auto n = xs.size() - from;
    Vector mean = Vector::Zero(static_cast<Eigen::Index>(d));
    for (std::size_t i = from; i < xs.size(); ++i)
        for (std::size_t j = 0; j < d; ++j) mean[static_cast<Eigen::Index>(j)] += xs[i][j];
    mean /= static_cast<double>(n);
    Matrix cov = Matrix::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    for (std::size_t i = from; i < xs.size(); ++i) {
        Vector v(static_cast<Eigen::Index>(d));
        for (std::size_t j = 0; j < d; ++j) v[static_cast<Eigen::Index>(j)] = xs[i][j] - mean[static_cast<Eigen::Index>(j)];
        cov += v * v.transpose();
    }
    cov /= static_cast<double>(std::max<std::size_t>(n - 1, 1));
    return (2.38 * 2.38 / static_cast<double>(d)) * cov;
}

struct PilotResult {
    Matrix proposal_cov;
    ParamVector last_state;
    std::size_t simulations = 0;
};

// Two pilot stages of fraction/2 of the budget each: the first with a scaled
// identity proposal, the second with the covariance learned from the first.
// The proposal for the main run comes from the second stage. A stage with too
// few distinct accepted states keeps the previous proposal.
inline PilotResult run_pilot(std::size_t main_iterations, const PilotOptions& opt, const SeedSpec& seed,
                             const BoxPrior& prior, const ParamVector& initial, const Backend& backend,
                             const Support& support = {}) {
    const std::size_t d = prior.dim();
    const auto stage_len = std::max<std::size_t>(50, static_cast<std::size_t>(opt.fraction * 0.5 * static_cast<double>(main_iterations)));
    Matrix cov = opt.initial_scale * opt.initial_scale * Matrix::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    PilotResult out{cov, initial, 0};
    for (std::uint64_t stage = 0; stage < 2; ++stage) {
        MhConfig cfg;
        cfg.iterations = stage_len;
        cfg.proposal_cov = cov;
        cfg.seed = seed.with_chain(stream::pilot_chain + 10 * stage);
        const Chain c = run_mh(cfg, prior, out.last_state, backend, support);
        out.simulations += c.simulations;
        const std::size_t moves = static_cast<std::size_t>(std::count(c.accepted.begin(), c.accepted.end(), 1));
        out.last_state = prior.make(c.draws.back());
        if (moves >= 2 * d + 2) {
            Matrix learned = scaled_covariance(c.unbounded, static_cast<std::size_t>(opt.burn_in * static_cast<double>(c.size())), d);
            learned += 1e-8 * Matrix::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
            Eigen::LLT<Matrix> llt(learned);
            if (llt.info() == Eigen::Success) cov = learned;
        }
    }
    out.proposal_cov = cov;
    return out;
}

// Effective sample size N / (1 + 2 sum rho_k) with Geyer's initial positive
// sequence truncation. A constant chain has ESS 1.
inline double ess(std::span<const double> x) {
    const std::size_t n = x.size();
    if (n < 2) return static_cast<double>(n);
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(n);
    std::size_t fft_len = 1;
    while (fft_len < 2 * n) fft_len <<= 1;
    std::vector<double> padded(fft_len, 0.0);
    for (std::size_t i = 0; i < n; ++i) padded[i] = x[i] - mean;
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> freq;
    fft.fwd(freq, padded);
    for (auto& c : freq) c = std::complex<double>(std::norm(c), 0.0);
    std::vector<double> acov;
    fft.inv(acov, freq);
    const double c0 = acov[0];
    if (!(c0 > 1e-300 * static_cast<double>(n))) return 1.0;
    double tau = -1.0;  // -rho_0 + 2 * sum of pair sums, with rho_0 = 1
    for (std::size_t m = 0; 2 * m + 1 < n; ++m) {
        const double pair = (acov[2 * m] + acov[2 * m + 1]) / c0;
        if (pair <= 0.0) break;
        tau += 2.0 * pair;
    }
    tau = std::max(tau, 1.0 / static_cast<double>(n));
    return static_cast<double>(n) / tau;
}

// Delimited text: one row per iteration, parameters then log-likelihood
// estimate then the accept flag. Values round-trip exactly.
inline void write_chain(std::ostream& os, const Chain& chain) {
    for (const auto& name : chain.names) os << name << ',';
    os << "loglik,accepted\n";
    char buf[32];
    for (std::size_t i = 0; i < chain.size(); ++i) {
        for (double v : chain.draws[i]) {
            std::snprintf(buf, sizeof buf, "%.17g", v);
            os << buf << ',';
        }
        std::snprintf(buf, sizeof buf, "%.17g", chain.loglik[i]);
        os << buf << ',' << static_cast<int>(chain.accepted[i]) << '\n';
    }
}

}  // namespace lfi::sampler
