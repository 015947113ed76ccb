#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "lfi/models.hpp"
#include "lfi/stats.hpp"
#include "lfi/summaries.hpp"

using namespace lfi;
using namespace lfi::summaries;
using Catch::Approx;

namespace {

std::vector<double> gandk_data(std::size_t n, std::uint64_t seed) {
    return models::gandk_simulate(n, {3, 1, 2, 0.5}, SeedSpec{seed, 0, 0, 0}).values();
}

std::vector<double> two_clusters(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> d(0.0, 1.0);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = d(gen) + (i % 2 ? 100.0 : 0.0);
    return y;
}

double loglik_phi(const std::vector<double>& z, const Vector& phi, std::size_t k) {
    return GaussianMixture::from_phi(phi, k).loglik(z);
}

Vector fd_gradient(const std::vector<double>& z, const Vector& phi, std::size_t k, double h = 1e-5) {
    Vector g(phi.size());
    for (Eigen::Index i = 0; i < phi.size(); ++i) {
        Vector a = phi, b = phi;
        a[i] += h;
        b[i] -= h;
        g[i] = (loglik_phi(z, a, k) - loglik_phi(z, b, k)) / (2 * h);
    }
    return g;
}

}  // namespace

TEST_CASE("single Gaussian fit is the closed-form MLE") {
    const auto y = gandk_data(200, 1);
    const auto g = fit_gmm(y, 1, SeedSpec{1, 0, 0, 0});
    double ss = 0.0;
    const double m = stats::mean(y);
    for (double v : y) ss += (v - m) * (v - m);
    CHECK(g.means()[0] == Approx(m).epsilon(1e-14));
    CHECK(g.variances()[0] == Approx(ss / 200.0).epsilon(1e-14));
}

TEST_CASE("single Gaussian score and information by hand") {
    const auto y = gandk_data(100, 2);
    const GaussianMixture g({1.0}, {2.5}, {1.7});
    const auto s = score_at(y, g);
    double s_mu = 0.0, s_logv = 0.0;
    for (double v : y) {
        s_mu += (v - 2.5) / 1.7;
        s_logv += 0.5 * ((v - 2.5) * (v - 2.5) / 1.7 - 1.0);
    }
    CHECK(s[0] == Approx(s_mu).epsilon(1e-12));
    CHECK(s[1] == Approx(s_logv).epsilon(1e-12));

    const auto fit = fit_gmm(y, 1, SeedSpec{1, 0, 0, 0});
    const auto j = observed_information(y, fit);
    CHECK(j(0, 0) == Approx(100.0 / fit.variances()[0]).epsilon(1e-10));
    CHECK((j - j.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("EM log-likelihood never decreases") {
    for (std::uint64_t seed : {3u, 4u, 5u}) {
        const auto y = gandk_data(150, seed);
        const GaussianMixture start({1, 1, 1}, {y[0], y[1], y[2]}, {1, 1, 1});
        const auto trace = em_trace(y, start);
        REQUIRE(trace.size() > 2);
        for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] >= trace[i - 1] - 1e-9 * std::abs(trace[i - 1]));
    }
}

TEST_CASE("two separated clusters are recovered") {
    const auto y = two_clusters(500, 6);
    const auto g = fit_gmm(y, 2, SeedSpec{6, 0, 0, 0});
    // grid-search oracle over the two means with unit variances, equal weights
    auto ll = [&](double m0, double m1) {
        return GaussianMixture({0.5, 0.5}, {m0, m1}, {1.0, 1.0}).loglik(y);
    };
    double best = -INFINITY, b0 = 0, b1 = 0;
    for (double m0 = -1.0; m0 <= 1.0; m0 += 0.02)
        for (double m1 = 99.0; m1 <= 101.0; m1 += 0.02)
            if (const double v = ll(m0, m1); v > best) best = v, b0 = m0, b1 = m1;
    CHECK(std::abs(g.means()[0] - b0) < 0.5);
    CHECK(std::abs(g.means()[1] - b1) < 0.5);
    CHECK(std::abs(g.means()[0]) < 0.5);
    CHECK(std::abs(g.means()[1] - 100.0) < 0.5);
}

TEST_CASE("the observed score vanishes at the fit") {
    for (std::size_t k : {2u, 3u}) {
        const auto y = gandk_data(100, 7 + k);
        const auto g = fit_gmm(y, k, SeedSpec{7, 0, 0, 0});
        CHECK(score_at(y, g).cwiseAbs().maxCoeff() < 1e-4);
    }
}

TEST_CASE("score matches finite differences") {
    std::mt19937_64 gen(8);
    std::normal_distribution<double> d(0.0, 1.0);
    for (int rep = 0; rep < 100; ++rep) {
        const std::size_t k = 1 + rep % 3;
        const auto z = gandk_data(40, 100 + static_cast<std::uint64_t>(rep));
        Vector phi(static_cast<Eigen::Index>(3 * k - 1));
        for (std::size_t j = 0; j + 1 < k; ++j) phi[static_cast<Eigen::Index>(j)] = 0.5 * d(gen);
        for (std::size_t j = 0; j < k; ++j) {
            phi[static_cast<Eigen::Index>(k - 1 + j)] = 3.0 + d(gen);
            phi[static_cast<Eigen::Index>(2 * k - 1 + j)] = 0.5 * d(gen);
        }
        const auto g = GaussianMixture::from_phi(phi, k);
        const Vector s = score_at(z, g);
        const Vector fd = fd_gradient(z, phi, k);
        const double scale = std::max(1.0, s.cwiseAbs().maxCoeff());
        CHECK((s - fd).cwiseAbs().maxCoeff() / scale < 1e-5);
    }
}

TEST_CASE("observed information matches a finite-difference Hessian") {
    for (std::size_t k : {2u, 3u}) {
        const auto y = gandk_data(120, 20 + k);
        const auto g = fit_gmm_with_fallback(y, k, SeedSpec{9, 0, 0, 0});
        const auto kk = g.components();
        const Vector phi = g.to_phi();
        const Matrix j = observed_information(y, g);
        Matrix fd(phi.size(), phi.size());
        const double h = 1e-5;
        for (Eigen::Index i = 0; i < phi.size(); ++i) {
            Vector a = phi, b = phi;
            a[i] += h;
            b[i] -= h;
            fd.col(i) = -(score_at(y, GaussianMixture::from_phi(a, kk)) - score_at(y, GaussianMixture::from_phi(b, kk))) /
                        (2 * h);
        }
        fd = 0.5 * (fd + fd.transpose());
        CHECK((j - fd).cwiseAbs().maxCoeff() / j.cwiseAbs().maxCoeff() < 1e-4);
        CHECK((j - j.transpose()).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("mahalanobis") {
    Matrix eye = Matrix::Identity(2, 2);
    CHECK(mahalanobis(Vector::Zero(2), eye) == 0.0);
    Vector s(2);
    s << 3.0, 4.0;
    CHECK(mahalanobis(s, eye) == Approx(5.0));
    s << 1.0, 2.0;
    Matrix j = Matrix::Zero(2, 2);
    j(0, 0) = 1.0;
    j(1, 1) = 4.0;
    CHECK(mahalanobis(s, j) == Approx(std::sqrt(2.0)).epsilon(1e-15));
    Matrix singular = Matrix::Zero(2, 2);
    CHECK_THROWS_AS(mahalanobis(s, singular), IllConditioned);
}

TEST_CASE("mixture density integrates to one") {
    const GaussianMixture g({0.2, 0.5, 0.3}, {-1.0, 2.0, 6.0}, {0.3, 1.5, 4.0});
    const double total = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
        [&](double x) { return std::exp(g.log_density(x)); }, -1.0 - 10 * std::sqrt(0.3), 6.0 + 10 * 2.0, 15, 1e-13);
    CHECK(std::abs(total - 1.0) < 1e-6);
}

TEST_CASE("parameterisation round trip") {
    const GaussianMixture g({0.2, 0.5, 0.3}, {-1.0, 2.0, 6.0}, {0.3, 1.5, 4.0});
    const auto back = GaussianMixture::from_phi(g.to_phi(), 3);
    for (std::size_t j = 0; j < 3; ++j) {
        CHECK(back.weights()[j] == Approx(g.weights()[j]).epsilon(1e-14));
        CHECK(back.means()[j] == g.means()[j]);
        CHECK(back.variances()[j] == Approx(g.variances()[j]).epsilon(1e-14));
    }
}

TEST_CASE("fits are deterministic and label-invariant") {
    const auto y = gandk_data(100, 30);
    const auto a = fit_gmm(y, 3, SeedSpec{4, 0, 0, 0});
    const auto b = fit_gmm(y, 3, SeedSpec{4, 0, 0, 0});
    CHECK(a.means() == b.means());
    CHECK(a.variances() == b.variances());

    // the same optimum reached from permuted starting labels yields one summary
    const auto z = gandk_data(100, 31);
    const FitOptions opt;
    const double floor = opt.variance_floor * stats::variance(y);
    std::vector<double> m{a.means()[0], a.means()[1], a.means()[2]};
    std::vector<double> v{a.variances()[0], a.variances()[1], a.variances()[2]};
    std::vector<double> w{a.weights()[0], a.weights()[1], a.weights()[2]};
    std::vector<std::size_t> perm{2, 0, 1};
    GaussianMixture permuted({w[perm[0]], w[perm[1]], w[perm[2]]}, {m[perm[0]], m[perm[1]], m[perm[2]]},
                             {v[perm[0]], v[perm[1]], v[perm[2]]});
    const auto refit = summaries::detail::newton_polish(y, summaries::detail::run_em(y, permuted, opt, floor).model, opt, floor).canonical();
    const Vector s1 = score_at(z, a), s2 = score_at(z, refit);
    CHECK((s1 - s2).cwiseAbs().maxCoeff() < 1e-6 * std::max(1.0, s1.cwiseAbs().maxCoeff()));
}

TEST_CASE("fit failures and the K - 1 fallback") {
    const auto tiny = gandk_data(8, 32);
    CHECK_THROWS_AS(fit_gmm(tiny, 3, SeedSpec{1, 0, 0, 0}), FitFailure);
    CHECK(fit_gmm_with_fallback(tiny, 3, SeedSpec{1, 0, 0, 0}).components() == 2);
    CHECK_THROWS_AS(fit_gmm(std::vector<double>(50, 1.0), 2, SeedSpec{1, 0, 0, 0}), FitFailure);
}

TEST_CASE("score summary of the observed data is near the origin") {
    const auto y = gandk_data(100, 33);
    const ScoreSummary s(y, 3, SeedSpec{5, 0, 0, 0});
    CHECK(s.observed().cwiseAbs().maxCoeff() < 1e-4);
    CHECK(s.discrepancy(y) < 1e-4);
    CHECK(s.discrepancy(gandk_data(100, 34)) > s.discrepancy(y));
}
