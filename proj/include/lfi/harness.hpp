#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "core.hpp"
#include "distances.hpp"
#include "error.hpp"
#include "experiment.hpp"
#include "likelihoods.hpp"
#include "models.hpp"
#include "random.hpp"
#include "sampler.hpp"
#include "stats.hpp"
#include "summaries.hpp"

namespace lfi::harness {

using experiment::Dataset;
using experiment::ModelSpec;
using Vector = Eigen::VectorXd;

inline constexpr std::array<double, 3> coverage_levels{0.80, 0.90, 0.95};

// ===========================================================================
// Configuration

struct ExperimentConfig {
    std::string model = "gandk";
    std::string method = "cvm";     // cvm wass mmd energy kl kde abc bsl exact
    std::string transform = "raw";  // raw | log
    std::size_t replicates = 20;
    std::size_t n = 0;              // 0: model default
    std::vector<double> theta;      // true value for simulated studies; empty: model default
    std::vector<double> central;    // calibration point; empty: theta
    std::string data;               // real dataset path (single replicate)
    std::size_t iterations = 20000;
    std::uint64_t seed = 1;
    double quantile = 0.05;
    std::size_t pool = 10000;
    std::size_t weight_pool = 1000;
    bool robust_weights = false;
    std::size_t bsl_m = 50;
    std::vector<std::size_t> bsl_m_grid;  // non-empty: tune m at the central value
    std::size_t kde_m = 100;
    double kde_bandwidth = 0.0;
    bool kde_recycle = true;
    std::size_t mixture_components = 3;
    std::string mmd_kernel = "gaussian";
    double mmd_sigma = 0.0;  // 0: median pairwise distance of the observed data
    bool mmd_exclude_diagonal = false;
    double pilot_fraction = 0.1;
    double pilot_scale = 0.1;
    double burn_in = 0.2;
    std::size_t threads = 1;
    std::vector<double> prior_lower;
    std::vector<double> prior_upper;
    bool keep_chains = true;
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<double> parse_list(const std::string& v) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        std::size_t used = 0;
        out.push_back(std::stod(item, &used));
        if (used != item.size()) throw ConfigError("bad number '" + item + "'");
    }
    return out;
}

inline bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("bad boolean '" + v + "'");
}

inline std::string join(const std::vector<double>& v) {
    std::ostringstream os;
    os.precision(17);
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    return os.str();
}

}  // namespace detail

// Key = value lines; '#' starts a comment. Keys mirror ExperimentConfig fields.
inline ExperimentConfig parse_config(const std::string& text) {
    ExperimentConfig c;
    std::stringstream ss(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string val = detail::trim(line.substr(eq + 1));
        try {
            if (key == "model") c.model = val;
            else if (key == "method") c.method = val;
            else if (key == "transform") c.transform = val;
            else if (key == "replicates") c.replicates = std::stoul(val);
            else if (key == "n") c.n = std::stoul(val);
            else if (key == "theta") c.theta = detail::parse_list(val);
            else if (key == "central") c.central = detail::parse_list(val);
            else if (key == "data") c.data = val;
            else if (key == "iterations") c.iterations = std::stoul(val);
            else if (key == "seed") c.seed = std::stoull(val);
            else if (key == "quantile") c.quantile = std::stod(val);
            else if (key == "pool") c.pool = std::stoul(val);
            else if (key == "weight_pool") c.weight_pool = std::stoul(val);
            else if (key == "robust_weights") c.robust_weights = detail::parse_bool(val);
            else if (key == "bsl_m") c.bsl_m = std::stoul(val);
            else if (key == "bsl_m_grid") {
                c.bsl_m_grid.clear();
                for (double v : detail::parse_list(val)) c.bsl_m_grid.push_back(static_cast<std::size_t>(v));
            }
            else if (key == "kde_m") c.kde_m = std::stoul(val);
            else if (key == "kde_bandwidth") c.kde_bandwidth = std::stod(val);
            else if (key == "kde_recycle") c.kde_recycle = detail::parse_bool(val);
            else if (key == "mixture_components") c.mixture_components = std::stoul(val);
            else if (key == "mmd_kernel") c.mmd_kernel = val;
            else if (key == "mmd_sigma") c.mmd_sigma = std::stod(val);
            else if (key == "mmd_exclude_diagonal") c.mmd_exclude_diagonal = detail::parse_bool(val);
            else if (key == "pilot_fraction") c.pilot_fraction = std::stod(val);
            else if (key == "pilot_scale") c.pilot_scale = std::stod(val);
            else if (key == "burn_in") c.burn_in = std::stod(val);
            else if (key == "threads") c.threads = std::stoul(val);
            else if (key == "prior_lower") c.prior_lower = detail::parse_list(val);
            else if (key == "prior_upper") c.prior_upper = detail::parse_list(val);
            else if (key == "keep_chains") c.keep_chains = detail::parse_bool(val);
            else throw ConfigError("unknown key '" + key + "'");
        } catch (const std::logic_error&) {
            throw ConfigError("config line " + std::to_string(lineno) + ": bad value for '" + key + "'");
        }
    }
    return c;
}

inline std::string to_config_text(const ExperimentConfig& c) {
    std::ostringstream os;
    os.precision(17);
    os << "model = " << c.model << "\nmethod = " << c.method << "\ntransform = " << c.transform
       << "\nreplicates = " << c.replicates << "\nn = " << c.n << "\n";
    if (!c.theta.empty()) os << "theta = " << detail::join(c.theta) << "\n";
    if (!c.central.empty()) os << "central = " << detail::join(c.central) << "\n";
    if (!c.data.empty()) os << "data = " << c.data << "\n";
    os << "iterations = " << c.iterations << "\nseed = " << c.seed << "\nquantile = " << c.quantile
       << "\npool = " << c.pool << "\nweight_pool = " << c.weight_pool
       << "\nrobust_weights = " << (c.robust_weights ? "true" : "false") << "\nbsl_m = " << c.bsl_m << "\n";
    if (!c.bsl_m_grid.empty()) {
        os << "bsl_m_grid = ";
        for (std::size_t i = 0; i < c.bsl_m_grid.size(); ++i) os << (i ? "," : "") << c.bsl_m_grid[i];
        os << "\n";
    }
    os << "kde_m = " << c.kde_m << "\nkde_bandwidth = " << c.kde_bandwidth
       << "\nkde_recycle = " << (c.kde_recycle ? "true" : "false")
       << "\nmixture_components = " << c.mixture_components << "\nmmd_kernel = " << c.mmd_kernel
       << "\nmmd_sigma = " << c.mmd_sigma << "\nmmd_exclude_diagonal = " << (c.mmd_exclude_diagonal ? "true" : "false")
       << "\npilot_fraction = " << c.pilot_fraction << "\npilot_scale = " << c.pilot_scale
       << "\nburn_in = " << c.burn_in << "\nthreads = " << c.threads << "\n";
    if (!c.prior_lower.empty()) os << "prior_lower = " << detail::join(c.prior_lower) << "\n";
    if (!c.prior_upper.empty()) os << "prior_upper = " << detail::join(c.prior_upper) << "\n";
    os << "keep_chains = " << (c.keep_chains ? "true" : "false") << "\n";
    return os.str();
}

inline bool is_distance_method(const std::string& m) {
    return m == "cvm" || m == "wass" || m == "mmd" || m == "energy" || m == "kl";
}

// Rejects model/method combinations that cannot run.
inline void validate(const ExperimentConfig& c, const ModelSpec& model) {
    static const std::vector<std::string> methods{"cvm", "wass", "mmd", "energy", "kl", "kde", "abc", "bsl", "exact"};
    if (std::find(methods.begin(), methods.end(), c.method) == methods.end())
        throw ConfigError("unknown method '" + c.method + "'");
    if (c.transform != "raw" && c.transform != "log") throw ConfigError("transform must be raw or log");
    if (c.method == "kde" && !model.kde_allowed) throw ConfigError("KDE is not available for model '" + model.id + "'");
    if (c.method == "exact" && !model.exact_available)
        throw ConfigError("no exact likelihood for model '" + model.id + "'");
    if (c.method == "exact" && c.transform != "raw") throw ConfigError("exact likelihood needs raw data");
    if (!(c.quantile > 0.0 && c.quantile <= 1.0)) throw ConfigError("quantile must lie in (0, 1]");
    if (c.iterations < 1) throw ConfigError("iterations must be at least 1");
    if (c.replicates < 1) throw ConfigError("replicates must be at least 1");
    if (!(c.burn_in >= 0.0 && c.burn_in < 1.0)) throw ConfigError("burn_in must lie in [0, 1)");
    if (!c.theta.empty() && c.theta.size() != model.param_names.size())
        throw ConfigError("theta has the wrong number of components");
    if (!c.central.empty() && c.central.size() != model.param_names.size())
        throw ConfigError("central has the wrong number of components");
}

// ===========================================================================
// Calibration

// Empirical q-quantile (linear interpolation) of a discrepancy pool.
inline double epsilon_from_pool(std::vector<double> pool, double q) {
    if (pool.empty()) throw TuningFailure("calibrate_epsilon: empty pool");
    std::sort(pool.begin(), pool.end());
    return stats::quantile_sorted(pool, q);
}

// Discrepancies of `size` independent simulations (one stream each) against
// the observed data. Simulations whose discrepancy cannot be formed are
// skipped; `failures` counts them.
template <class Simulate, class Discrepancy>
std::vector<double> discrepancy_pool(std::size_t size, const SeedSpec& seed, Simulate&& simulate,
                                     Discrepancy&& discrepancy, std::size_t* failures = nullptr) {
    std::vector<double> pool;
    pool.reserve(size);
    for (std::size_t i = 0; i < size; ++i) {
        Rng rng(seed.with_proposal(i));
        try {
            pool.push_back(discrepancy(simulate(rng)));
        } catch (const Error&) {
            if (failures) ++*failures;
        }
    }
    return pool;
}

template <class Simulate, class Discrepancy>
double calibrate_epsilon(double q, std::size_t pool_size, const SeedSpec& seed, Simulate&& simulate,
                         Discrepancy&& discrepancy) {
    if (!(q > 0.0 && q <= 1.0)) throw ConfigError("calibrate_epsilon: q must lie in (0, 1]");
    return epsilon_from_pool(discrepancy_pool(pool_size, seed, simulate, discrepancy), q);
}

// Smallest grid m whose log-likelihood sd lies in [1, 2]; otherwise the m
// whose sd is closest to 1.5.
inline std::size_t select_m(const std::vector<std::size_t>& grid, const std::vector<double>& sds) {
    if (grid.empty() || grid.size() != sds.size()) throw TuningFailure("tune_bsl_m: empty or misaligned grid");
    std::optional<std::size_t> in_band;
    for (std::size_t i = 0; i < grid.size(); ++i)
        if (sds[i] >= 1.0 && sds[i] <= 2.0 && (!in_band || grid[i] < grid[*in_band])) in_band = i;
    if (in_band) return grid[*in_band];
    std::size_t best = 0;
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (std::abs(sds[i] - 1.5) < std::abs(sds[best] - 1.5)) best = i;
    return grid[best];
}

struct MTuning {
    std::size_t m = 0;
    std::vector<double> sds;
};

// sd over `repeats` BSL log-likelihood estimates at one parameter value, for
// each m in the grid. `loglik_at(m, rng)` returns one estimate.
template <class LoglikAt>
MTuning tune_bsl_m(const std::vector<std::size_t>& grid, const SeedSpec& seed, LoglikAt&& loglik_at,
                   std::size_t repeats = 50) {
    if (grid.empty()) throw TuningFailure("tune_bsl_m: empty grid");
    MTuning out;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        std::vector<double> values;
        std::size_t failures = 0;
        for (std::size_t r = 0; r < repeats; ++r) {
            Rng rng(seed.with_chain(seed.chain + g).with_proposal(r));
            try {
                const double v = loglik_at(grid[g], rng);
                if (std::isfinite(v)) values.push_back(v);
                else ++failures;
            } catch (const Error&) {
                ++failures;
            }
        }
        if (values.size() < 2 || failures * 2 > repeats)
            throw TuningFailure("tune_bsl_m: persistent singular covariance at m = " + std::to_string(grid[g]));
        out.sds.push_back(stats::sd(values));
    }
    out.m = select_m(grid, out.sds);
    return out;
}

// ===========================================================================
// Posterior summaries and metrics

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

struct PosteriorSummary {
    double mean = 0.0;
    double median = 0.0;
    double sd = 0.0;
    std::array<Interval, 3> intervals{};  // equal-tailed, at coverage_levels
    double ess = 0.0;
};

inline PosteriorSummary summarize_draws(std::span<const double> draws) {
    if (draws.size() < 2) throw DegenerateSample("summarize_draws: need at least two draws");
    std::vector<double> s(draws.begin(), draws.end());
    std::sort(s.begin(), s.end());
    PosteriorSummary p;
    p.mean = stats::mean(draws);
    p.median = stats::quantile_sorted(s, 0.5);
    p.sd = stats::sd(draws);
    for (std::size_t l = 0; l < coverage_levels.size(); ++l) {
        const double tail = 0.5 * (1.0 - coverage_levels[l]);
        p.intervals[l] = {stats::quantile_sorted(s, tail), stats::quantile_sorted(s, 1.0 - tail)};
    }
    p.ess = sampler::ess(draws);
    return p;
}

struct ReplicateResult {
    std::size_t index = 0;
    bool ok = false;
    std::string error;
    std::vector<PosteriorSummary> params;
    double epsilon = std::numeric_limits<double>::quiet_NaN();
    std::size_t m = 0;
    double acceptance = 0.0;
    std::size_t simulations = 0;              // MCMC (pilot + main)
    std::size_t calibration_simulations = 0;  // epsilon pool, weights, m tuning
    std::size_t failed_estimates = 0;
    std::vector<double> weights;
    sampler::Chain chain;
};

struct MetricsRow {
    std::string parameter;
    double bias_mean = 0.0;
    double bias_median = 0.0;
    double avg_sd = 0.0;
    std::array<double, 3> coverage{};  // percent
};

struct MetricsTable {
    std::vector<MetricsRow> rows;
    std::size_t replicates = 0;
    std::size_t excluded = 0;
};

// Averages over successful replicates of (posterior mean - truth), (median -
// truth), posterior sd, and the percentage of intervals containing the truth.
inline MetricsTable compute_metrics(const std::vector<ReplicateResult>& results, const std::vector<double>& truth,
                                    const std::vector<std::string>& names) {
    if (truth.empty()) throw ConfigError("compute_metrics: metrics need the true parameter (simulated study)");
    MetricsTable t;
    std::vector<const ReplicateResult*> ok;
    for (const auto& r : results) {
        if (r.ok) ok.push_back(&r);
        else ++t.excluded;
    }
    std::sort(ok.begin(), ok.end(), [](auto* a, auto* b) { return a->index < b->index; });
    t.replicates = ok.size();
    if (ok.empty()) throw ConfigError("compute_metrics: no successful replicates");
    const double r = static_cast<double>(ok.size());
    for (std::size_t j = 0; j < truth.size(); ++j) {
        MetricsRow row;
        row.parameter = j < names.size() ? names[j] : "theta" + std::to_string(j + 1);
        for (const auto* res : ok) {
            if (res->params.size() != truth.size()) throw ConfigError("compute_metrics: dimension mismatch");
            const auto& p = res->params[j];
            row.bias_mean += p.mean - truth[j];
            row.bias_median += p.median - truth[j];
            row.avg_sd += p.sd;
            for (std::size_t l = 0; l < coverage_levels.size(); ++l)
                if (p.intervals[l].lo <= truth[j] && truth[j] <= p.intervals[l].hi) row.coverage[l] += 1.0;
        }
        row.bias_mean /= r;
        row.bias_median /= r;
        row.avg_sd /= r;
        for (auto& c : row.coverage) c = 100.0 * c / r;
        t.rows.push_back(row);
    }
    return t;
}

// ===========================================================================
// Method setup for one observed dataset

struct PreparedMethod {
    sampler::Backend backend;
    double epsilon = std::numeric_limits<double>::quiet_NaN();
    std::size_t m = 0;
    std::size_t calibration_simulations = 0;
    std::vector<double> weights;
};

class Study {
public:
    explicit Study(ExperimentConfig cfg) : Study(cfg, experiment::make_model(cfg.model)) {}

    // A study on a caller-supplied model (cfg.model is ignored).
    Study(ExperimentConfig cfg, ModelSpec model) : cfg_(std::move(cfg)), model_(std::move(model)) {
        validate(cfg_, model_);
        if (cfg_.n == 0) cfg_.n = model_.default_n;
        truth_ = cfg_.theta.empty() ? model_.default_truth : cfg_.theta;
        central_ = cfg_.central.empty() ? truth_ : cfg_.central;
    }

    [[nodiscard]] const ExperimentConfig& config() const { return cfg_; }
    [[nodiscard]] const ModelSpec& model() const { return model_; }
    [[nodiscard]] const std::vector<double>& truth() const { return truth_; }
    [[nodiscard]] const std::vector<double>& central() const { return central_; }
    [[nodiscard]] bool simulated() const { return cfg_.data.empty(); }

    [[nodiscard]] Dataset transform(const Dataset& d) const {
        return cfg_.transform == "log" ? experiment::log_transform(d) : d;
    }

    [[nodiscard]] Dataset simulate(const std::vector<double>& theta, Rng& rng) const {
        return transform(model_.simulate(theta, cfg_.n, rng));
    }

    [[nodiscard]] BoxPrior prior_for(const Dataset& raw_observed) const {
        BoxPrior box = model_.prior(raw_observed);
        if (cfg_.prior_lower.empty() && cfg_.prior_upper.empty()) return box;
        auto lo = cfg_.prior_lower.empty() ? box.lower() : cfg_.prior_lower;
        auto hi = cfg_.prior_upper.empty() ? box.upper() : cfg_.prior_upper;
        return BoxPrior(box.names(), lo, hi);
    }

    // Discrepancy between observed and simulated datasets for the full-data
    // distance methods, as a composite over pieces (counts use L1).
    [[nodiscard]] distances::CompositeDistance composite_for(const Dataset& observed) const {
        distances::CompositeDistance c;
        for (std::size_t p = 0; p < observed.size(); ++p) {
            distances::DistanceSpec spec;
            if (observed.is_count[p]) {
                spec.kind = distances::Kind::l1;
            } else {
                spec.kind = kind_of(cfg_.method);
                spec.allow_unequal = !model_.univariate_sample;
                if (spec.kind == distances::Kind::mmd) {
                    spec.kernel.type = cfg_.mmd_kernel == "laplace" ? distances::KernelType::laplace
                                                                    : distances::KernelType::gaussian;
                    spec.kernel.sigma = cfg_.mmd_sigma > 0.0 ? cfg_.mmd_sigma
                                                             : distances::median_pairwise_distance(observed.pieces[p]);
                    spec.mmd_cross = cfg_.mmd_exclude_diagonal ? distances::MmdCross::exclude_diagonal
                                                               : distances::MmdCross::all_pairs;
                }
            }
            c.parts.push_back({spec, 1.0});
        }
        return c;
    }

    static distances::Kind kind_of(const std::string& method) {
        if (method == "cvm") return distances::Kind::cvm;
        if (method == "wass") return distances::Kind::wasserstein1;
        if (method == "mmd") return distances::Kind::mmd;
        if (method == "energy") return distances::Kind::energy;
        if (method == "kl") return distances::Kind::kl1nn;
        throw ConfigError("not a distance method: " + method);
    }

    static double composite_value(const distances::CompositeDistance& c, const Dataset& y, const Dataset& z) {
        if (y.size() != z.size()) throw ConfigError("datasets have different piece structure");
        std::vector<std::span<const double>> yp, zp;
        for (std::size_t p = 0; p < y.size(); ++p) {
            yp.emplace_back(y.pieces[p]);
            zp.emplace_back(z.pieces[p]);
        }
        return distances::composite_eval(c, yp, zp);
    }

    PreparedMethod prepare(const Dataset& observed, const SeedSpec& rep_seed) const;

    ReplicateResult run_replicate(std::size_t r) const;

    std::vector<ReplicateResult> run() const;

    // Dataset for replicate r: simulated at the truth, or loaded from file.
    [[nodiscard]] Dataset raw_observed(std::size_t r) const;

    void set_loaded_data(Dataset d) { loaded_ = std::move(d); }

private:
    // Summary statistic map built from the observed data.
    struct SummaryMap {
        std::function<Vector(const Dataset&)> eta;
        Vector observed;
        std::function<double(const Vector&)> discrepancy;  // of eta(z)
    };

    SummaryMap summary_for(const Dataset& observed, const SeedSpec& rep_seed, std::size_t& sims) const;

    ExperimentConfig cfg_;
    ModelSpec model_;
    std::vector<double> truth_;
    std::vector<double> central_;
    std::optional<Dataset> loaded_;
};

inline Dataset Study::raw_observed(std::size_t r) const {
    if (!simulated()) {
        if (!loaded_) throw ConfigError("real-data study: dataset not loaded");
        return *loaded_;
    }
    Rng rng(SeedSpec{cfg_.seed, r, stream::dataset, 0});
    return model_.simulate(truth_, cfg_.n, rng);
}

inline Study::SummaryMap Study::summary_for(const Dataset& observed, const SeedSpec& rep_seed,
                                            std::size_t& sims) const {
    SummaryMap s;
    const SeedSpec fit_seed = rep_seed.with_chain(stream::mixture_fit);
    if (model_.id == "toad") {
        s.eta = [](const Dataset& d) {
            models::ToadSummary ts;
            for (std::size_t l = 0; l < ts.size(); ++l) {
                ts[l].lag = models::toad_lags[l];
                ts[l].returns = static_cast<std::size_t>(d.pieces[2 * l][0]);
                ts[l].non_returns = d.pieces[2 * l + 1];
            }
            const auto v = models::toad_quantile_summaries(ts);
            return Vector(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
        };
    } else if (model_.id == "stereo") {
        auto summary = std::make_shared<summaries::ScoreSummary>(observed.pieces[1], cfg_.mixture_components, fit_seed);
        s.eta = [summary](const Dataset& d) {
            Vector v(static_cast<Eigen::Index>(summary->dim() + 1));
            v.head(static_cast<Eigen::Index>(summary->dim())) = (*summary)(d.pieces[1]);
            v[static_cast<Eigen::Index>(summary->dim())] = d.pieces[0][0];
            return v;
        };
    } else {
        auto summary = std::make_shared<summaries::ScoreSummary>(observed.pieces[0], cfg_.mixture_components, fit_seed);
        s.eta = [summary](const Dataset& d) { return Vector((*summary)(d.pieces[0])); };
        s.observed = summary->observed();
        s.discrepancy = [summary](const Vector& eta) {
            return summaries::mahalanobis(eta - summary->observed(), summary->information());
        };
        return s;
    }
    s.observed = s.eta(observed);
    if (cfg_.method == "abc") {
        // weighted Euclidean distance, weights 1 / sd from simulations at the central value
        std::vector<std::vector<double>> cols(static_cast<std::size_t>(s.observed.size()));
        const SeedSpec wseed = rep_seed.with_chain(stream::weight_pool);
        for (std::size_t i = 0; i < cfg_.weight_pool; ++i) {
            Rng rng(wseed.with_proposal(i));
            ++sims;
            try {
                const Vector e = s.eta(simulate(central_, rng));
                for (Eigen::Index j = 0; j < e.size(); ++j) cols[static_cast<std::size_t>(j)].push_back(e[j]);
            } catch (const Error&) {
            }
        }
        const auto w = distances::calibrate_weights(cols, cfg_.robust_weights);
        Vector wv = Eigen::Map<const Vector>(w.data(), static_cast<Eigen::Index>(w.size()));
        const Vector obs = s.observed;
        s.discrepancy = [wv, obs](const Vector& eta) { return (wv.array() * (eta - obs).array()).matrix().norm(); };
    }
    return s;
}

inline PreparedMethod Study::prepare(const Dataset& observed, const SeedSpec& rep_seed) const {
    PreparedMethod pm;
    const std::string& method = cfg_.method;
    auto sim = [this](const std::vector<double>& theta) {
        return [this, theta](Rng& rng) { return simulate(theta, rng); };
    };

    if (is_distance_method(method)) {
        auto composite = composite_for(observed);
        if (composite.parts.size() > 1) {
            std::vector<std::vector<double>> pools(composite.parts.size());
            const SeedSpec wseed = rep_seed.with_chain(stream::weight_pool);
            for (std::size_t i = 0; i < cfg_.weight_pool; ++i) {
                Rng rng(wseed.with_proposal(i));
                ++pm.calibration_simulations;
                const Dataset z = simulate(central_, rng);
                for (std::size_t p = 0; p < composite.parts.size(); ++p) {
                    try {
                        pools[p].push_back(distances::evaluate(composite.parts[p].spec, observed.pieces[p], z.pieces[p]));
                    } catch (const Error&) {
                    }
                }
            }
            pm.weights = distances::calibrate_weights(pools, cfg_.robust_weights);
            for (std::size_t p = 0; p < composite.parts.size(); ++p) composite.parts[p].weight = pm.weights[p];
        } else {
            pm.weights = {1.0};
        }
        auto discrepancy = [composite, observed](const Dataset& z) { return composite_value(composite, observed, z); };
        pm.epsilon = calibrate_epsilon(cfg_.quantile, cfg_.pool, rep_seed.with_chain(stream::epsilon_pool),
                                       sim(central_), discrepancy);
        pm.calibration_simulations += cfg_.pool;
        const double eps = pm.epsilon;
        pm.backend = [this, discrepancy, eps](const ParamVector& theta, Rng& rng) {
            const auto est = likelihoods::abc_loglik_estimate(
                eps, [&](Rng& r) { return simulate(theta.values, r); }, discrepancy, rng);
            return sampler::Estimate{est.log_weight(), est.distance, 1};
        };
        return pm;
    }

    if (method == "abc" || method == "bsl") {
        std::size_t sims = 0;
        auto summary = std::make_shared<SummaryMap>(summary_for(observed, rep_seed, sims));
        pm.calibration_simulations += sims;
        if (method == "abc") {
            auto discrepancy = [summary](const Dataset& z) { return summary->discrepancy(summary->eta(z)); };
            pm.epsilon = calibrate_epsilon(cfg_.quantile, cfg_.pool, rep_seed.with_chain(stream::epsilon_pool),
                                           sim(central_), discrepancy);
            pm.calibration_simulations += cfg_.pool;
            const double eps = pm.epsilon;
            pm.backend = [this, discrepancy, eps](const ParamVector& theta, Rng& rng) {
                const auto est = likelihoods::abc_loglik_estimate(
                    eps, [&](Rng& r) { return simulate(theta.values, r); }, discrepancy, rng);
                return sampler::Estimate{est.log_weight(), est.distance, 1};
            };
            return pm;
        }
        auto loglik_at = [this, summary](const std::vector<double>& theta, std::size_t m, Rng& rng) {
            return likelihoods::bsl_loglik(summary->observed, m,
                                           [&](Rng& r) { return summary->eta(simulate(theta, r)); }, rng);
        };
        pm.m = cfg_.bsl_m;
        if (!cfg_.bsl_m_grid.empty()) {
            const auto tuned = tune_bsl_m(cfg_.bsl_m_grid, rep_seed.with_chain(stream::bsl_tuning),
                                          [&](std::size_t m, Rng& rng) { return loglik_at(central_, m, rng); });
            pm.m = tuned.m;
            for (auto m : cfg_.bsl_m_grid) pm.calibration_simulations += 50 * m;
        }
        const std::size_t m = pm.m;
        pm.backend = [loglik_at, m](const ParamVector& theta, Rng& rng) {
            return sampler::Estimate{loglik_at(theta.values, m, rng), std::numeric_limits<double>::quiet_NaN(), m};
        };
        return pm;
    }

    if (method == "kde") {
        likelihoods::KdeConfig kc{cfg_.kde_m, cfg_.kde_bandwidth, cfg_.kde_recycle};
        pm.m = kc.m;
        if (model_.id == "stereo") {
            pm.backend = [this, kc, observed](const ParamVector& theta, Rng& rng) {
                std::vector<double> counts;
                std::vector<std::vector<double>> sizes;
                for (std::size_t j = 0; j < kc.m; ++j) {
                    Dataset z = simulate(theta.values, rng);
                    counts.push_back(z.pieces[0][0]);
                    sizes.push_back(std::move(z.pieces[1]));
                }
                likelihoods::KdeConfig pooled = kc;
                pooled.recycle = true;
                const double ll = likelihoods::discrete_kde_logpmf(observed.pieces[0][0], counts) +
                                  likelihoods::kde_loglik(observed.pieces[1], sizes, pooled);
                return sampler::Estimate{ll, std::numeric_limits<double>::quiet_NaN(), kc.m};
            };
        } else {
            pm.backend = [this, kc, observed](const ParamVector& theta, Rng& rng) {
                const double ll = likelihoods::kde_loglik(
                    observed.pieces[0], kc, [&](Rng& r) { return simulate(theta.values, r).pieces[0]; }, rng);
                return sampler::Estimate{ll, std::numeric_limits<double>::quiet_NaN(), kc.m};
            };
        }
        return pm;
    }

    // exact (g-and-k)
    pm.backend = [observed](const ParamVector& theta, Rng&) {
        const models::GandKParams p{theta[0], theta[1], theta[2], theta[3]};
        return sampler::Estimate{models::gandk_loglik(observed.pieces[0], p), std::numeric_limits<double>::quiet_NaN(), 0};
    };
    return pm;
}

inline ReplicateResult Study::run_replicate(std::size_t r) const {
    ReplicateResult res;
    res.index = r;
    try {
        const Dataset raw = raw_observed(r);
        const Dataset observed = transform(raw);
        const BoxPrior prior = prior_for(raw);
        const SeedSpec rep_seed{cfg_.seed, r, 0, 0};
        PreparedMethod pm = prepare(observed, rep_seed);
        res.epsilon = pm.epsilon;
        res.m = pm.m;
        res.weights = pm.weights;
        res.calibration_simulations = pm.calibration_simulations;

        sampler::Support support;
        if (model_.support) support = [this](const ParamVector& t) { return model_.support(t.values); };
        const ParamVector start = prior.make(central_);
        if (!prior.contains(start.values)) throw ConfigError("central value lies outside the prior box");

        sampler::PilotOptions popt;
        popt.fraction = cfg_.pilot_fraction;
        popt.initial_scale = cfg_.pilot_scale;
        const auto pilot = sampler::run_pilot(cfg_.iterations, popt, rep_seed, prior, start, pm.backend, support);

        sampler::MhConfig mh;
        mh.iterations = cfg_.iterations;
        mh.proposal_cov = pilot.proposal_cov;
        mh.seed = rep_seed.with_chain(stream::main_chain);
        auto chain = sampler::run_mh(mh, prior, pilot.last_state, pm.backend, support);
        res.simulations = pilot.simulations + chain.simulations;
        res.failed_estimates = chain.failed_estimates;
        res.acceptance = chain.acceptance_rate();
        for (std::size_t j = 0; j < prior.dim(); ++j) res.params.push_back(summarize_draws(chain.component(j, cfg_.burn_in)));
        if (cfg_.keep_chains) res.chain = std::move(chain);
        res.ok = true;
    } catch (const Error& e) {
        res.ok = false;
        res.error = e.what();
    }
    return res;
}

// All replicates, in index order. Replicates run on `threads` workers; each
// owns its streams, so results do not depend on the thread count.
inline std::vector<ReplicateResult> Study::run() const {
    const std::size_t count = simulated() ? cfg_.replicates : 1;
    std::vector<ReplicateResult> results(count);
    const std::size_t workers = std::max<std::size_t>(1, std::min(cfg_.threads, count));
    if (workers == 1) {
        for (std::size_t r = 0; r < count; ++r) results[r] = run_replicate(r);
        return results;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t r = next++; r < count; r = next++) results[r] = run_replicate(r);
        });
    for (auto& t : pool) t.join();
    return results;
}

}  // namespace lfi::harness
