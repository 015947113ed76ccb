#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "error.hpp"
#include "random.hpp"

namespace lfi {

inline constexpr double neg_inf = -std::numeric_limits<double>::infinity();

// An ordered vector of finite real observations, fixed at construction.
class Sample {
public:
    Sample() = default;

    explicit Sample(std::vector<double> values) : values_(std::move(values)) {
        if (values_.empty()) throw DegenerateSample("Sample: at least one observation required");
        for (double v : values_)
            if (!std::isfinite(v)) throw DegenerateSample("Sample: non-finite observation");
    }

    Sample(std::initializer_list<double> values) : Sample(std::vector<double>(values)) {}

    [[nodiscard]] std::size_t size() const { return values_.size(); }
    [[nodiscard]] double operator[](std::size_t i) const { return values_[i]; }
    [[nodiscard]] auto begin() const { return values_.begin(); }
    [[nodiscard]] auto end() const { return values_.end(); }
    [[nodiscard]] std::span<const double> view() const { return values_; }
    [[nodiscard]] const std::vector<double>& values() const { return values_; }

    operator std::span<const double>() const { return values_; }  // NOLINT

    friend bool operator==(const Sample&, const Sample&) = default;

private:
    std::vector<double> values_;
};

// A point in parameter space with named components.
struct ParamVector {
    std::vector<std::string> names;
    std::vector<double> values;

    [[nodiscard]] std::size_t size() const { return values.size(); }
    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }

    friend bool operator==(const ParamVector&, const ParamVector&) = default;
};

// Unbounded coordinates together with log|d theta / d x| of the inverse map.
struct UnboundedPoint {
    std::vector<double> coords;
    double log_jacobian = 0.0;
};

namespace detail {

// log(sigmoid(x)) without overflow for large |x|.
inline double log_sigmoid(double x) {
    return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace detail

// Independent uniform priors on a box. Bounds may be data dependent (they are
// frozen at experiment setup).
class BoxPrior {
public:
    BoxPrior(std::vector<std::string> names, std::vector<double> lower, std::vector<double> upper)
        : names_(std::move(names)), lower_(std::move(lower)), upper_(std::move(upper)) {
        if (names_.empty() || names_.size() != lower_.size() || lower_.size() != upper_.size())
            throw ConfigError("BoxPrior: names and bounds must be non-empty and aligned");
        for (std::size_t i = 0; i < lower_.size(); ++i)
            if (!(lower_[i] < upper_[i]) || !std::isfinite(lower_[i]) || !std::isfinite(upper_[i]))
                throw ConfigError("BoxPrior: lower < upper required for '" + names_[i] + "'");
        log_volume_ = 0.0;
        for (std::size_t i = 0; i < lower_.size(); ++i) log_volume_ += std::log(upper_[i] - lower_[i]);
    }

    [[nodiscard]] std::size_t dim() const { return lower_.size(); }
    [[nodiscard]] const std::vector<std::string>& names() const { return names_; }
    [[nodiscard]] const std::vector<double>& lower() const { return lower_; }
    [[nodiscard]] const std::vector<double>& upper() const { return upper_; }

    [[nodiscard]] bool contains(std::span<const double> theta) const {
        if (theta.size() != dim()) return false;
        for (std::size_t i = 0; i < dim(); ++i)
            if (!(theta[i] > lower_[i] && theta[i] < upper_[i])) return false;
        return true;
    }

    [[nodiscard]] double log_density(std::span<const double> theta) const {
        return contains(theta) ? -log_volume_ : neg_inf;
    }

    [[nodiscard]] ParamVector make(std::vector<double> values) const {
        if (values.size() != dim()) throw ConfigError("BoxPrior: parameter dimension mismatch");
        return {names_, std::move(values)};
    }

    [[nodiscard]] ParamVector midpoint() const {
        std::vector<double> mid(dim());
        for (std::size_t i = 0; i < dim(); ++i) mid[i] = 0.5 * (lower_[i] + upper_[i]);
        return make(std::move(mid));
    }

private:
    std::vector<std::string> names_;
    std::vector<double> lower_;
    std::vector<double> upper_;
    double log_volume_ = 0.0;
};

// Componentwise logit((theta - l) / (u - l)). The returned log-Jacobian is that
// of the inverse map, so targeting prior * likelihood * |J| on the unbounded
// space leaves the bounded-space posterior invariant.
inline UnboundedPoint to_unbounded(std::span<const double> theta, const BoxPrior& prior) {
    if (theta.size() != prior.dim()) throw ConfigError("to_unbounded: dimension mismatch");
    UnboundedPoint out;
    out.coords.resize(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double l = prior.lower()[i], u = prior.upper()[i];
        if (!(theta[i] > l && theta[i] < u))
            throw BoundaryError("to_unbounded: '" + prior.names()[i] + "' on or outside its bound");
        const double width = u - l;
        // logit via log of the two distances keeps precision near either bound.
        const double x = std::log(theta[i] - l) - std::log(u - theta[i]);
        out.coords[i] = x;
        out.log_jacobian += std::log(width) + detail::log_sigmoid(x) + detail::log_sigmoid(-x);
    }
    return out;
}

inline ParamVector from_unbounded(std::span<const double> x, const BoxPrior& prior) {
    if (x.size() != prior.dim()) throw ConfigError("from_unbounded: dimension mismatch");
    std::vector<double> theta(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double l = prior.lower()[i], u = prior.upper()[i];
        // Evaluate from whichever bound is nearer so the result never rounds onto it.
        double t = x[i] >= 0.0 ? u - (u - l) * detail::sigmoid(-x[i]) : l + (u - l) * detail::sigmoid(x[i]);
        if (!(t > l)) t = std::nextafter(l, u);
        if (!(t < u)) t = std::nextafter(u, l);
        theta[i] = t;
    }
    return prior.make(std::move(theta));
}

// log|d theta / d x| at unbounded coordinates x.
inline double log_jacobian_at(std::span<const double> x, const BoxPrior& prior) {
    double lj = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
        lj += std::log(prior.upper()[i] - prior.lower()[i]) + detail::log_sigmoid(x[i]) +
              detail::log_sigmoid(-x[i]);
    return lj;
}

inline ParamVector prior_sample(const BoxPrior& prior, const SeedSpec& seed) {
    Rng rng(seed);
    std::vector<double> theta(prior.dim());
    for (std::size_t i = 0; i < prior.dim(); ++i) theta[i] = rng.uniform(prior.lower()[i], prior.upper()[i]);
    return prior.make(std::move(theta));
}

}  // namespace lfi
