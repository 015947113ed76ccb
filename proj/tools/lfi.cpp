// Command-line front end: simulate datasets, calibrate tolerances, run
// repeated-simulation studies and tabulate their metrics.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lfi/lfi.hpp"

namespace fs = std::filesystem;
using namespace lfi;

namespace {

std::vector<double> theta_or_default(const std::vector<double>& theta, const experiment::ModelSpec& model) {
    if (theta.empty()) return model.default_truth;
    if (theta.size() != model.param_names.size())
        throw ConfigError("--theta needs " + std::to_string(model.param_names.size()) + " values");
    return theta;
}

int cmd_simulate(const std::string& model_id, std::vector<double> theta, std::size_t n, std::uint64_t seed,
                 const std::string& out_path) {
    const auto model = experiment::make_model(model_id);
    theta = theta_or_default(theta, model);
    if (n == 0) n = model.default_n;
    Rng rng(SeedSpec{seed, 0, stream::dataset, 0});
    std::ofstream file;
    if (!out_path.empty()) file = io::open_out(out_path);
    std::ostream& os = out_path.empty() ? std::cout : file;
    if (model_id == "toad") {
        io::write_toad_matrix(os, models::toad_simulate({theta[0], theta[1], theta[2]}, rng));
    } else if (model_id == "stereo") {
        const auto s = models::stereo_simulate({theta[0], theta[1], theta[2]}, rng);
        os << s.count() << '\n';
        io::write_values(os, s.sizes);
    } else {
        io::write_values(os, model.simulate(theta, n, rng).pieces[0]);
    }
    return 0;
}

int cmd_calibrate(harness::ExperimentConfig cfg) {
    cfg.replicates = 1;
    harness::Study study(cfg);
    if (!cfg.data.empty()) study.set_loaded_data(io::read_dataset(cfg.data, cfg.model));
    const auto raw = study.raw_observed(0);
    const auto prepared = study.prepare(study.transform(raw), SeedSpec{cfg.seed, 0, 0, 0});
    nlohmann::json j;
    j["model"] = cfg.model;
    j["method"] = cfg.method;
    j["quantile"] = cfg.quantile;
    j["pool"] = cfg.pool;
    if (std::isfinite(prepared.epsilon)) j["epsilon"] = prepared.epsilon;
    if (prepared.m) j["m"] = prepared.m;
    if (!prepared.weights.empty()) j["weights"] = prepared.weights;
    j["calibration_simulations"] = prepared.calibration_simulations;
    std::cout << j.dump(2) << '\n';
    return 0;
}

int cmd_run(const std::string& config_path, const std::string& manifest_path, const std::string& out_dir) {
    harness::ExperimentConfig cfg;
    if (!manifest_path.empty()) {
        const auto j = nlohmann::json::parse(io::read_text(manifest_path));
        cfg = harness::parse_config(j.at("config").get<std::string>());
    } else {
        cfg = harness::parse_config(io::read_text(config_path));
    }
    harness::Study study(cfg);
    if (!cfg.data.empty()) study.set_loaded_data(io::read_dataset(cfg.data, cfg.model));
    const auto results = study.run();

    const fs::path dir(out_dir);
    fs::create_directories(dir);
    const auto& names = study.model().param_names;
    const std::vector<double> truth = study.simulated() ? study.truth() : std::vector<double>{};
    std::size_t failed = 0;
    for (const auto& r : results) {
        if (!r.ok) {
            ++failed;
            std::cerr << "replicate " << r.index << " excluded: " << r.error << '\n';
            continue;
        }
        if (cfg.keep_chains) {
            char name[32];
            std::snprintf(name, sizeof name, "chain_%03zu.csv", r.index);
            auto os = io::open_out(dir / "chains" / name);
            sampler::write_chain(os, r.chain);
        }
    }
    {
        auto os = io::open_out(dir / "replicates.csv");
        io::write_replicates(os, results, names, truth);
    }
    if (study.simulated()) {
        auto os = io::open_out(dir / "metrics.csv");
        io::write_metrics(os, harness::compute_metrics(results, truth, names));
    }
    {
        auto os = io::open_out(dir / "manifest.json");
        os << io::manifest(study, results).dump(2) << '\n';
    }
    std::cerr << results.size() - failed << " of " << results.size() << " replicates completed; output in " << dir.string()
              << '\n';
    return 0;
}

int cmd_metrics(const std::string& in_dir, const std::string& out_path) {
    const auto table = io::read_replicates(io::read_text(fs::path(in_dir) / "replicates.csv"));
    if (table.truth.size() != table.names.size()) throw ConfigError("real-data study: metrics need a known truth");
    const auto metrics = harness::compute_metrics(table.results, table.truth, table.names);
    if (out_path.empty()) {
        io::write_metrics(std::cout, metrics);
    } else {
        auto os = io::open_out(out_path);
        io::write_metrics(os, metrics);
    }
    if (metrics.excluded) std::cerr << metrics.excluded << " failed replicates excluded\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Likelihood-free Bayesian inference with full-data distances"};
    app.require_subcommand(1);

    auto* sim = app.add_subcommand("simulate", "simulate one dataset");
    std::string model_id = "gandk", out_path;
    std::vector<double> theta;
    std::size_t n = 0;
    std::uint64_t seed = 1;
    sim->add_option("--model", model_id, "gandk | mg1 | stereo | toad")->required();
    sim->add_option("--theta", theta, "parameter values (comma separated)")->delimiter(',');
    sim->add_option("--n", n, "sample size (gandk, mg1)");
    sim->add_option("--seed", seed, "master seed");
    sim->add_option("--out", out_path, "output file (stdout if omitted)");

    auto* cal = app.add_subcommand("calibrate", "calibrate the ABC tolerance (or BSL m / distance weights)");
    harness::ExperimentConfig ccfg;
    std::string transform = "raw";
    cal->add_option("--model", ccfg.model)->required();
    cal->add_option("--method", ccfg.method)->required();
    cal->add_option("--q", ccfg.quantile, "quantile of the discrepancy pool");
    cal->add_option("--pool", ccfg.pool, "pool size");
    cal->add_option("--theta", ccfg.theta, "true / central parameter")->delimiter(',');
    cal->add_option("--n", ccfg.n);
    cal->add_option("--seed", ccfg.seed);
    cal->add_option("--data", ccfg.data, "observed dataset file (default: simulated at theta)");
    cal->add_option("--transform", ccfg.transform, "raw | log");
    cal->add_option("--weight-pool", ccfg.weight_pool);
    cal->add_option("--bsl-m-grid", ccfg.bsl_m_grid)->delimiter(',');

    auto* run = app.add_subcommand("run", "run a study from a config file or a previous manifest");
    std::string config_path, manifest_path, run_out = "results";
    auto* copt = run->add_option("--config", config_path, "key = value config file");
    auto* mopt = run->add_option("--manifest", manifest_path, "manifest.json of an earlier run");
    copt->excludes(mopt);
    run->add_option("--out", run_out, "output directory");

    auto* met = app.add_subcommand("metrics", "bias / sd / coverage table from a results directory");
    std::string in_dir, table_out;
    met->add_option("--in", in_dir, "results directory")->required();
    met->add_option("--out", table_out, "CSV output (stdout if omitted)");

    CLI11_PARSE(app, argc, argv);
    try {
        if (sim->parsed()) return cmd_simulate(model_id, theta, n, seed, out_path);
        if (cal->parsed()) return cmd_calibrate(ccfg);
        if (run->parsed()) {
            if (config_path.empty() && manifest_path.empty()) throw ConfigError("run needs --config or --manifest");
            return cmd_run(config_path, manifest_path, run_out);
        }
        if (met->parsed()) return cmd_metrics(in_dir, table_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
