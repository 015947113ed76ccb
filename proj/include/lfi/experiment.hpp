#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "core.hpp"
#include "error.hpp"
#include "models.hpp"
#include "random.hpp"

// Runtime registry of the generative models used by the harness and CLI.
//
// Every dataset is held as a list of pieces: a piece is either a count (a
// single value compared in L1) or a vector of observations (compared with a
// full-data distance). g-and-k and M/G/1 have one data piece; the stereological
// model has (count, sizes); the toad model has (returns, non-returns) per lag.

namespace lfi::experiment {

struct Dataset {
    std::vector<std::vector<double>> pieces;
    std::vector<bool> is_count;

    [[nodiscard]] std::size_t size() const { return pieces.size(); }
    friend bool operator==(const Dataset&, const Dataset&) = default;
};

// Log-transform the data pieces (counts are untouched).
inline Dataset log_transform(const Dataset& d) {
    Dataset out = d;
    for (std::size_t p = 0; p < out.size(); ++p) {
        if (out.is_count[p]) continue;
        for (double& v : out.pieces[p]) {
            if (!(v > 0.0)) throw ConfigError("log transform requires strictly positive data");
            v = std::log(v);
        }
    }
    return out;
}

struct ModelSpec {
    std::string id;
    std::vector<std::string> param_names;
    std::vector<double> default_truth;
    std::size_t default_n = 0;
    bool kde_allowed = true;
    bool exact_available = false;
    bool univariate_sample = true;  // a single data piece

    // (theta, rng) -> dataset, n observations where the model has a size knob
    std::function<Dataset(const std::vector<double>&, std::size_t, Rng&)> simulate;
    // prior box, possibly depending on the raw observed dataset
    std::function<BoxPrior(const Dataset&)> prior;
    // additional support restriction inside the box
    std::function<bool(const std::vector<double>&)> support;
};

inline Dataset single_piece(std::vector<double> v) { return Dataset{{std::move(v)}, {false}}; }

inline Dataset stereo_dataset(const models::StereoData& s) {
    return Dataset{{{static_cast<double>(s.count())}, s.sizes}, {true, false}};
}

inline Dataset toad_dataset(const models::ToadSummary& s) {
    Dataset d;
    for (const auto& lag : s) {
        d.pieces.push_back({static_cast<double>(lag.returns)});
        d.is_count.push_back(true);
        d.pieces.push_back(lag.non_returns);
        d.is_count.push_back(false);
    }
    return d;
}

inline ModelSpec gandk_model() {
    ModelSpec m;
    m.id = "gandk";
    m.param_names = {"a", "b", "g", "k"};
    m.default_truth = {3.0, 1.0, 2.0, 0.5};
    m.default_n = 100;
    m.exact_available = true;
    m.simulate = [](const std::vector<double>& t, std::size_t n, Rng& rng) {
        return single_piece(models::gandk_simulate(n, {t[0], t[1], t[2], t[3]}, rng).values());
    };
    m.prior = [names = m.param_names](const Dataset&) {
        return BoxPrior(names, {0.0, 0.0, 0.0, 0.0}, {5.0, 5.0, 10.0, 1.0});
    };
    return m;
}

inline ModelSpec mg1_model() {
    ModelSpec m;
    m.id = "mg1";
    m.param_names = {"theta1", "theta2", "theta3"};
    m.default_truth = {1.0, 5.0, 0.2};
    m.default_n = 50;
    m.simulate = [](const std::vector<double>& t, std::size_t n, Rng& rng) {
        return single_piece(models::mg1_simulate({t[0], t[1], t[2]}, rng, n + 1).values());
    };
    m.prior = [names = m.param_names](const Dataset& observed) {
        const auto& y = observed.pieces.at(0);
        const double ymin = *std::min_element(y.begin(), y.end());
        return BoxPrior(names, {0.0, 0.0, 0.0}, {ymin, 10.0 + ymin, 0.5});
    };
    m.support = [](const std::vector<double>& t) { return t[0] < t[1]; };
    return m;
}

inline ModelSpec stereo_model() {
    ModelSpec m;
    m.id = "stereo";
    m.param_names = {"lambda", "sigma", "xi"};
    m.default_truth = {100.0, 2.0, -0.1};
    m.univariate_sample = false;
    m.simulate = [](const std::vector<double>& t, std::size_t, Rng& rng) {
        return stereo_dataset(models::stereo_simulate({t[0], t[1], t[2]}, rng));
    };
    m.prior = [names = m.param_names](const Dataset&) {
        return BoxPrior(names, {30.0, 0.0, -3.0}, {200.0, 15.0, 3.0});
    };
    return m;
}

inline ModelSpec toad_model() {
    ModelSpec m;
    m.id = "toad";
    m.param_names = {"alpha", "scale", "p0"};
    m.default_truth = {1.7, 35.0, 0.6};
    m.kde_allowed = false;
    m.univariate_sample = false;
    m.simulate = [](const std::vector<double>& t, std::size_t, Rng& rng) {
        return toad_dataset(models::toad_summarize(models::toad_simulate({t[0], t[1], t[2]}, rng)));
    };
    m.prior = [names = m.param_names](const Dataset&) {
        return BoxPrior(names, {1.0, 0.0, 0.0}, {2.0, 100.0, 0.9});
    };
    return m;
}

inline ModelSpec make_model(const std::string& id) {
    if (id == "gandk") return gandk_model();
    if (id == "mg1") return mg1_model();
    if (id == "stereo") return stereo_model();
    if (id == "toad") return toad_model();
    throw ConfigError("unknown model '" + id + "' (expected gandk, mg1, stereo or toad)");
}

}  // namespace lfi::experiment
