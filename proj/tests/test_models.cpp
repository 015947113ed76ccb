#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <queue>
#include <random>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "lfi/models.hpp"
#include "lfi/stats.hpp"

using namespace lfi;
using namespace lfi::models;
using Catch::Approx;

namespace {

double normal_cdf(double x, double sd = 1.0) { return 0.5 * std::erfc(-x / (sd * std::numbers::sqrt2)); }

// integral of the g-and-k density over the support reachable by |z| <= 12
double gandk_mass(const GandKParams& p) {
    double total = 0.0;
    for (double z = -12.0; z < 12.0; z += 0.25) {
        const double lo = gandk_from_normal(z, p), hi = gandk_from_normal(z + 0.25, p);
        total += boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
            [&](double x) { return std::exp(gandk_logpdf(x, p)); }, lo, hi, 10, 1e-13);
    }
    return total;
}

// Independent M/G/1 oracle: event list of arrivals and departures processed in
// time order with an explicit FIFO queue. Draws come from the stream in the
// same per-customer order (inter-arrival, then service).
std::vector<double> mg1_event_list(const Mg1Params& p, Rng& rng, std::size_t customers) {
    std::vector<double> arrive(customers), service(customers);
    double t = 0.0;
    for (std::size_t i = 0; i < customers; ++i) {
        t += rng.exponential(p.arrival_rate);
        arrive[i] = t;
        service[i] = rng.uniform(p.service_lo, p.service_hi);
    }
    struct Event {
        double time;
        int kind;  // 0 departure, 1 arrival
        std::size_t who;
        bool operator>(const Event& o) const { return time != o.time ? time > o.time : kind > o.kind; }
    };
    std::priority_queue<Event, std::vector<Event>, std::greater<>> events;
    for (std::size_t i = 0; i < customers; ++i) events.push({arrive[i], 1, i});
    std::queue<std::size_t> waiting;
    bool busy = false;
    std::vector<double> departures;
    while (!events.empty()) {
        const Event e = events.top();
        events.pop();
        if (e.kind == 1) {
            if (!busy) {
                busy = true;
                events.push({e.time + service[e.who], 0, e.who});
            } else {
                waiting.push(e.who);
            }
        } else {
            departures.push_back(e.time);
            if (!waiting.empty()) {
                const auto next = waiting.front();
                waiting.pop();
                events.push({e.time + service[next], 0, next});
            } else {
                busy = false;
            }
        }
    }
    std::vector<double> y;
    for (std::size_t i = 1; i < departures.size(); ++i) y.push_back(departures[i] - departures[i - 1]);
    return y;
}

}  // namespace

// ---------------------------------------------------------------------------
// g-and-k

TEST_CASE("gandk quantile reductions") {
    const GandKParams p{3, 1, 2, 0.5};
    CHECK(gandk_quantile(0.5, p) == 3.0);
    const GandKParams normal{1.5, 2.0, 0.0, 0.0};
    for (double q : {0.01, 0.2, 0.7, 0.99})
        CHECK(gandk_quantile(q, normal) ==
              Approx(1.5 + 2.0 * boost::math::quantile(boost::math::normal_distribution<double>(), q)).epsilon(1e-14));
    CHECK_THROWS_AS(gandk_quantile(0.0, p), InvalidParameter);
    CHECK_THROWS_AS(gandk_quantile(1.0, p), InvalidParameter);
}

TEST_CASE("gandk simulation matches the quantile function") {
    const GandKParams p{3, 1, 2, 0.5};
    const auto x = gandk_simulate(100000, p, SeedSpec{5, 0, 0, 0});
    for (int i = 1; i <= 9; ++i) {
        const double q = i / 10.0;
        const double xq = gandk_quantile(q, p);
        const double se = std::sqrt(q * (1 - q) / 100000.0) / std::exp(gandk_logpdf(xq, p));
        CHECK(std::abs(stats::quantile(x.view(), q) - xq) < 3.0 * se);
    }
    CHECK(std::abs(stats::median(gandk_simulate(10000, p, SeedSpec{6, 0, 0, 0}).view()) - 3.0) < 0.05);
    CHECK(gandk_simulate(50, p, SeedSpec{1, 2, 3, 4}) == gandk_simulate(50, p, SeedSpec{1, 2, 3, 4}));
    for (double v : gandk_simulate(20, GandKParams{2.5, 0.0, 2, 0.5}, SeedSpec{1, 0, 0, 0})) CHECK(v == 2.5);
}

TEST_CASE("gandk density") {
    const GandKParams normal{1.0, 2.0, 0.0, 0.0};
    for (double x : {-5.0, -1.0, 0.3, 1.0, 4.0, 9.0}) {
        const double expect = -0.5 * std::pow((x - 1.0) / 2.0, 2) - std::log(2.0 * std::sqrt(2.0 * std::numbers::pi));
        CHECK(gandk_logpdf(x, normal) == Approx(expect).margin(1e-8));
    }
    const GandKParams p{3, 1, 2, 0.5};
    CHECK(std::abs(gandk_mass(p) - 1.0) < 1e-6);
    for (double x = -10.0; x < 40.0; x += 0.37) CHECK(std::exp(gandk_logpdf(x, p)) >= 0.0);
    CHECK_THROWS_AS(gandk_logpdf(0.0, GandKParams{0, 1, 4, -0.3}), InvalidParameter);
    CHECK_FALSE(gandk_is_monotone(GandKParams{0, 1, 4, -0.3}));
    CHECK(gandk_loglik(std::vector<double>{2.0, 3.0, 7.0}, p) ==
          Approx(gandk_logpdf(2.0, p) + gandk_logpdf(3.0, p) + gandk_logpdf(7.0, p)).epsilon(1e-14));
}

TEST_CASE("gandk with c = 0.8 and k >= 0 is increasing for any g") {
    std::mt19937_64 gen(21);
    std::uniform_real_distribution<double> gd(-15.0, 15.0), kd(0.0, 10.0);
    for (int rep = 0; rep < 200; ++rep) {
        const GandKParams p{0.0, 1.0, gd(gen), kd(gen)};
        REQUIRE(gandk_is_monotone(p));
        double prev = gandk_from_normal(-12.0, p);
        for (double z = -12.0 + 1e-3; z <= 12.0; z += 1e-3) {
            const double q = gandk_from_normal(z, p);
            REQUIRE(q > prev);
            prev = q;
        }
    }
}

TEST_CASE("gandk draws follow the numeric CDF") {
    const GandKParams p{3, 1, 2, 0.5};
    const auto x = gandk_simulate(100000, p, SeedSpec{8, 0, 0, 0});
    const double d = stats::ks_statistic(x.view(), [&](double v) { return normal_cdf(gandk_invert(v, p)); });
    CHECK(d < stats::ks_critical_1pct(x.size()));
}

// ---------------------------------------------------------------------------
// M/G/1

TEST_CASE("mg1 matches an event-list queue simulator") {
    for (std::uint64_t s = 0; s < 200; ++s) {
        const Mg1Params p{0.5 + 0.01 * static_cast<double>(s), 4.0, 0.05 + 0.002 * static_cast<double>(s)};
        Rng a(SeedSpec{31, s, 0, 0}), b(SeedSpec{31, s, 0, 0});
        const auto y = mg1_simulate(p, a);
        CHECK(y.size() == 50);
        CHECK(y.values() == mg1_event_list(p, b, 51));
    }
}

TEST_CASE("mg1 limiting regimes") {
    Rng rng(SeedSpec{32, 0, 0, 0});
    const auto busy = mg1_simulate({1.0, 5.0, 1e9}, rng, 10001);
    CHECK(stats::ks_statistic(busy.view(), [](double v) { return std::clamp((v - 1.0) / 4.0, 0.0, 1.0); }) < 0.05);
    for (double v : mg1_simulate({2.0, 2.0, 1e12}, rng, 100)) CHECK(v == Approx(2.0).epsilon(1e-9));
    const auto many = mg1_simulate({1.0, 5.0, 0.2}, rng, 100001);
    CHECK(*std::min_element(many.begin(), many.end()) >= 1.0);  // a departure never follows sooner than a service
}

// ---------------------------------------------------------------------------
// Stereological extremes

TEST_CASE("stereo sizes and counts") {
    Rng rng(SeedSpec{40, 0, 0, 0});
    const auto expo = stereo_sizes(10000, 2.0, 0.0, rng);
    std::vector<double> excess;
    for (double v : expo) excess.push_back(v - stereo_threshold);
    CHECK(std::abs(stats::mean(excess) - 2.0) < 3.0 * 2.0 / 100.0);

    for (double v : stereo_sizes(10000, 2.0, -0.5, rng)) {
        CHECK(v <= stereo_threshold + 2.0 / 0.5);
        CHECK(v > stereo_threshold);
    }
    std::vector<double> counts;
    for (std::uint64_t i = 0; i < 10000; ++i)
        counts.push_back(static_cast<double>(stereo_simulate({100.0, 2.0, -0.1}, SeedSpec{41, i, 0, 0}).count()));
    CHECK(std::abs(stats::mean(counts) - 100.0) < 3.0 * 10.0 / 100.0);
}

// ---------------------------------------------------------------------------
// Stable variates

TEST_CASE("stable alpha = 2 is Gaussian with variance 2 scale^2") {
    Rng rng(SeedSpec{50, 0, 0, 0});
    std::vector<double> x;
    for (int i = 0; i < 100000; ++i) x.push_back(stable_sample(2.0, 3.0, rng));
    CHECK(stats::ks_statistic(x, [](double v) { return normal_cdf(v, 3.0 * std::numbers::sqrt2); }) <
          stats::ks_critical_1pct(x.size()));
}

TEST_CASE("stable alpha = 1 is Cauchy; draws are symmetric") {
    Rng rng(SeedSpec{51, 0, 0, 0});
    std::vector<double> x;
    double sign = 0.0;
    for (int i = 0; i < 100000; ++i) {
        x.push_back(stable_sample(1.0, 2.0, rng));
        sign += x.back() > 0 ? 1.0 : -1.0;
    }
    CHECK(std::abs(stats::median(x)) < 0.05);
    const double iqr = stats::quantile(x, 0.75) - stats::quantile(x, 0.25);
    CHECK(std::abs(iqr - 4.0) < 0.05 * 4.0);
    CHECK(std::abs(sign / 100000.0) < 4.0 / std::sqrt(100000.0));
    CHECK_THROWS_AS(stable_sample(2.5, 1.0, rng), InvalidParameter);
}

// ---------------------------------------------------------------------------
// Toads

TEST_CASE("toad p0 = 1 never leaves the start") {
    const auto y = toad_simulate({1.7, 35.0, 1.0}, SeedSpec{60, 0, 0, 0});
    for (double v : y.locations) CHECK(v == 0.0);
    for (const auto& lag : toad_summarize(y)) {
        CHECK(lag.non_returns.empty());
        CHECK(lag.returns == 66 * (63 - lag.lag));
    }
}

TEST_CASE("toad p0 = 0 lag-1 displacements are stable steps") {
    const auto y = toad_simulate({1.5, 20.0, 0.0}, SeedSpec{61, 0, 0, 0}, 500);
    std::vector<double> disp, pool;
    for (std::size_t t = 0; t < y.n_toads; ++t)
        for (std::size_t d = 1; d < y.n_days; ++d) disp.push_back(std::abs(y.at(d, t) - y.at(d - 1, t)));
    Rng rng(SeedSpec{62, 0, 0, 0});
    for (int i = 0; i < 40000; ++i) pool.push_back(std::abs(stable_sample(1.5, 20.0, rng)));
    CHECK(stats::ks_two_sample(disp, pool) < stats::ks_critical_1pct(disp.size(), pool.size()));
}

TEST_CASE("toad alpha = 2 displacement variance grows linearly in the lag") {
    const auto y = toad_simulate({2.0, 5.0, 0.0}, SeedSpec{63, 0, 0, 0}, 10000, 9);
    auto var_at = [&](std::size_t lag) {
        std::vector<double> d;
        for (std::size_t t = 0; t < y.n_toads; ++t) d.push_back(y.at(lag, t) - y.at(0, t));
        return stats::variance(d);
    };
    const double v1 = var_at(1);
    CHECK(v1 == Approx(2.0 * 25.0).epsilon(0.05));
    for (std::size_t lag : {2u, 4u, 8u}) CHECK(var_at(lag) / v1 == Approx(static_cast<double>(lag)).epsilon(0.10));
}

TEST_CASE("toad summaries by hand") {
    ToadData y{3, 1, {0.0, 1.0, 100.0}};
    const auto s = toad_summarize(y);
    CHECK(s[0].returns == 1);
    CHECK(s[0].non_returns == std::vector<double>{99.0});
    CHECK(s[1].returns == 0);
    CHECK(s[1].non_returns == std::vector<double>{100.0});
    CHECK(s[2].non_returns.empty());
    CHECK(s[3].returns == 0);

    ToadData edge{2, 1, {0.0, 10.0}};
    CHECK(toad_summarize(edge)[0].returns == 0);
    CHECK(toad_summarize(edge)[0].non_returns == std::vector<double>{10.0});

    ToadData flat{10, 4, std::vector<double>(40, 7.0)};
    for (const auto& lag : toad_summarize(flat)) {
        CHECK(lag.non_returns.empty());
        CHECK(lag.returns == 4 * (10 - lag.lag));
    }

    ToadData gaps{3, 1, {0.0, std::nan(""), 50.0}};
    const auto g = toad_summarize(gaps);
    CHECK(g[0].returns + g[0].non_returns.size() == 0);
    CHECK(g[1].non_returns == std::vector<double>{50.0});
}

TEST_CASE("toad quantile summaries") {
    ToadSummary s;
    std::vector<double> grid;
    for (int i = 1; i <= 11; ++i) grid.push_back(10.0 * i);
    for (std::size_t l = 0; l < 4; ++l) s[l] = {toad_lags[l], 5 + l, grid};
    const auto v = toad_quantile_summaries(s);
    REQUIRE(v.size() == 48);
    for (std::size_t l = 0; l < 4; ++l) {
        for (std::size_t k = 0; k < 10; ++k) CHECK(v[12 * l + k] == Approx(std::log(10.0)).epsilon(1e-14));
        CHECK(v[12 * l + 10] == 60.0);
        CHECK(v[12 * l + 11] == static_cast<double>(5 + l));
    }
    ToadSummary shifted = s;
    for (auto& lag : shifted)
        for (auto& d : lag.non_returns) d += 17.0;
    const auto w = toad_quantile_summaries(shifted);
    for (std::size_t l = 0; l < 4; ++l) {
        for (std::size_t k = 0; k < 10; ++k) CHECK(w[12 * l + k] == Approx(v[12 * l + k]).margin(1e-12));
        CHECK(w[12 * l + 10] == 77.0);
    }
    s[2].non_returns.resize(10);
    CHECK_THROWS_AS(toad_quantile_summaries(s), SummaryFailure);
}
