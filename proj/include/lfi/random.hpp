#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace lfi {

// Identifies one independent random stream: a master seed plus a structured
// stream id. Two equal SeedSpecs always produce the same draws.
struct SeedSpec {
    std::uint64_t master = 0;
    std::uint64_t replicate = 0;
    std::uint64_t chain = 0;
    std::uint64_t proposal = 0;

    [[nodiscard]] SeedSpec with_replicate(std::uint64_t r) const { return {master, r, chain, proposal}; }
    [[nodiscard]] SeedSpec with_chain(std::uint64_t c) const { return {master, replicate, c, proposal}; }
    [[nodiscard]] SeedSpec with_proposal(std::uint64_t p) const { return {master, replicate, chain, p}; }

    friend bool operator==(const SeedSpec&, const SeedSpec&) = default;
};

// Chain ids reserved for non-MCMC purposes so that e.g. the dataset stream of
// replicate r never overlaps the MCMC stream of the same replicate.
namespace stream {
inline constexpr std::uint64_t main_chain = 0;
inline constexpr std::uint64_t pilot_chain = 1;
inline constexpr std::uint64_t dataset = 1000;
inline constexpr std::uint64_t epsilon_pool = 1001;
inline constexpr std::uint64_t weight_pool = 1002;
inline constexpr std::uint64_t mixture_fit = 1003;
inline constexpr std::uint64_t bsl_tuning = 1004;
inline constexpr std::uint64_t initial_state = 1005;
}  // namespace stream

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace detail

// xoshiro256++ seeded by hashing the SeedSpec fields through splitmix64.
// Seeding is a handful of integer ops, so a fresh stream per MH proposal is cheap.
class Xoshiro256 {
public:
    using result_type = std::uint64_t;

    explicit Xoshiro256(const SeedSpec& seed) {
        std::uint64_t h = seed.master;
        for (std::uint64_t part : {seed.replicate, seed.chain, seed.proposal}) {
            std::uint64_t s = h ^ (part * 0xd1342543de82ef95ULL);
            h = detail::splitmix64(s);
        }
        std::uint64_t sm = h;
        for (auto& w : state_) w = detail::splitmix64(sm);
    }

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() {
        const std::uint64_t result = detail::rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = detail::rotl(state_[3], 45);
        return result;
    }

private:
    std::array<std::uint64_t, 4> state_{};
};

// Random variates with fixed, platform-independent algorithms so that streams
// are bit-identical across standard library implementations.
class Rng {
public:
    explicit Rng(const SeedSpec& seed) : engine_(seed) {}

    // Uniform on the open interval (0, 1).
    double uniform() {
        for (;;) {
            const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
            if (u > 0.0) return u;
        }
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Marsaglia polar method; the spare variate is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        has_spare_ = true;
        return u * f;
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    // Exponential with the given rate.
    double exponential(double rate) { return -std::log(uniform()) / rate; }

    std::uint64_t poisson(double mean) {
        if (mean <= 0.0) return 0;
        if (mean < 30.0) {
            const double limit = std::exp(-mean);
            std::uint64_t k = 0;
            double prod = uniform();
            while (prod > limit) {
                ++k;
                prod *= uniform();
            }
            return k;
        }
        return poisson_ptrs(mean);
    }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
    }

    Xoshiro256& engine() { return engine_; }

private:
    // Hörmann's transformed rejection with squeeze.
    std::uint64_t poisson_ptrs(double lam) {
        const double slam = std::sqrt(lam);
        const double loglam = std::log(lam);
        const double b = 0.931 + 2.53 * slam;
        const double a = -0.059 + 0.02483 * b;
        const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
        const double vr = 0.9277 - 3.6224 / (b - 2.0);
        for (;;) {
            const double u = uniform() - 0.5;
            const double v = uniform();
            const double us = 0.5 - std::abs(u);
            const double k = std::floor((2.0 * a / us + b) * u + lam + 0.43);
            if (us >= 0.07 && v <= vr) return static_cast<std::uint64_t>(k);
            if (k < 0.0 || (us < 0.013 && v > us)) continue;
            if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b) <=
                -lam + k * loglam - std::lgamma(k + 1.0))
                return static_cast<std::uint64_t>(k);
        }
    }

    Xoshiro256 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace lfi
