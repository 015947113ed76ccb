#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "error.hpp"
#include "experiment.hpp"
#include "harness.hpp"
#include "models.hpp"

// File formats used by the command-line tool.

namespace lfi::io {

using experiment::Dataset;

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string read_text(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw ConfigError("cannot open " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::ofstream open_out(const std::filesystem::path& p) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p);
    if (!out) throw ConfigError("cannot write " + p.string());
    return out;
}

namespace detail {

inline double parse_number(const std::string& tok, std::size_t line) {
    try {
        std::size_t used = 0;
        const double v = std::stod(tok, &used);
        if (used == tok.size()) return v;
    } catch (const std::logic_error&) {
    }
    throw ConfigError("line " + std::to_string(line) + ": bad number '" + tok + "'");
}

// Non-empty lines with '#' comments removed.
inline std::vector<std::pair<std::size_t, std::string>> content_lines(const std::string& text) {
    std::vector<std::pair<std::size_t, std::string>> out;
    std::stringstream ss(text);
    std::string line;
    std::size_t no = 0;
    while (std::getline(ss, line)) {
        ++no;
        if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
        line = harness::detail::trim(line);
        if (!line.empty()) out.emplace_back(no, line);
    }
    return out;
}

}  // namespace detail

// One observation per line.
inline std::vector<double> parse_values(const std::string& text) {
    std::vector<double> v;
    for (const auto& [no, line] : detail::content_lines(text)) v.push_back(detail::parse_number(line, no));
    if (v.empty()) throw ConfigError("data file has no observations");
    return v;
}

// Rectangular matrix, rows = days, columns = toads; separators are commas,
// tabs or spaces; "NA" marks a missing location.
inline models::ToadData parse_toad_matrix(const std::string& text) {
    models::ToadData d;
    for (auto [no, line] : detail::content_lines(text)) {
        for (char& ch : line)
            if (ch == ',' || ch == '\t' || ch == ';') ch = ' ';
        std::stringstream ss(line);
        std::string tok;
        std::size_t cols = 0;
        while (ss >> tok) {
            d.locations.push_back(tok == "NA" || tok == "na" || tok == "NaN" ? std::numeric_limits<double>::quiet_NaN()
                                                                           : detail::parse_number(tok, no));
            ++cols;
        }
        if (d.n_days == 0) d.n_toads = cols;
        else if (cols != d.n_toads) throw ConfigError("toad matrix line " + std::to_string(no) + ": ragged row");
        ++d.n_days;
    }
    if (d.n_days < 2 || d.n_toads < 1) throw ConfigError("toad matrix needs at least two days");
    return d;
}

// Reads a raw dataset for the given model. Stereo files carry the inclusion
// count on the first line, then one size per line.
inline Dataset read_dataset(const std::filesystem::path& path, const std::string& model) {
    const std::string text = read_text(path);
    if (model == "toad") return experiment::toad_dataset(models::toad_summarize(parse_toad_matrix(text)));
    if (model == "stereo") {
        const auto lines = detail::content_lines(text);
        if (lines.empty()) throw ConfigError("stereo file is empty");
        const double count = detail::parse_number(lines[0].second, lines[0].first);
        models::StereoData s;
        for (std::size_t i = 1; i < lines.size(); ++i) s.sizes.push_back(detail::parse_number(lines[i].second, lines[i].first));
        if (count != static_cast<double>(s.sizes.size()))
            throw ConfigError("stereo file: count header does not match the number of sizes");
        return experiment::stereo_dataset(s);
    }
    return experiment::single_piece(parse_values(text));
}

inline void write_values(std::ostream& os, const std::vector<double>& v) {
    for (double x : v) os << fmt(x) << '\n';
}

inline void write_toad_matrix(std::ostream& os, const models::ToadData& d) {
    for (std::size_t day = 0; day < d.n_days; ++day) {
        for (std::size_t t = 0; t < d.n_toads; ++t) {
            const double v = d.at(day, t);
            os << (t ? "," : "") << (std::isnan(v) ? std::string("NA") : fmt(v));
        }
        os << '\n';
    }
}

// ---------------------------------------------------------------------------
// Results

inline const char* replicate_header =
    "replicate,status,parameter,truth,mean,median,sd,lo80,hi80,lo90,hi90,lo95,hi95,ess,"
    "epsilon,m,acceptance,simulations,calibration_simulations\n";

inline void write_replicates(std::ostream& os, const std::vector<harness::ReplicateResult>& results,
                             const std::vector<std::string>& names, const std::vector<double>& truth) {
    os << replicate_header;
    for (const auto& r : results) {
        if (!r.ok) {
            os << r.index << ",failed,,,,,,,,,,,,,,,,,\n";
            continue;
        }
        for (std::size_t j = 0; j < r.params.size(); ++j) {
            const auto& p = r.params[j];
            os << r.index << ",ok," << names[j] << ','
               << (j < truth.size() ? fmt(truth[j]) : std::string("NA")) << ',' << fmt(p.mean) << ','
               << fmt(p.median) << ',' << fmt(p.sd);
            for (const auto& iv : p.intervals) os << ',' << fmt(iv.lo) << ',' << fmt(iv.hi);
            os << ',' << fmt(p.ess) << ',' << fmt(r.epsilon) << ',' << r.m << ',' << fmt(r.acceptance) << ','
               << r.simulations << ',' << r.calibration_simulations << '\n';
        }
    }
}

struct ReplicateTable {
    std::vector<harness::ReplicateResult> results;
    std::vector<std::string> names;
    std::vector<double> truth;
};

// Inverse of write_replicates (posterior summaries only).
inline ReplicateTable read_replicates(const std::string& text) {
    ReplicateTable t;
    std::stringstream ss(text);
    std::string line;
    std::getline(ss, line);
    if (line + "\n" != replicate_header) throw ConfigError("replicates table: unexpected header");
    std::size_t no = 1;
    while (std::getline(ss, line)) {
        ++no;
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) f.push_back(cell);
        while (f.size() < 19) f.emplace_back();
        const auto index = static_cast<std::size_t>(std::stoul(f[0]));
        if (t.results.empty() || t.results.back().index != index) {
            harness::ReplicateResult r;
            r.index = index;
            r.ok = f[1] == "ok";
            t.results.push_back(r);
        }
        if (f[1] != "ok") continue;
        auto& r = t.results.back();
        const std::size_t j = r.params.size();
        if (j >= t.names.size()) {
            t.names.push_back(f[2]);
            if (f[3] != "NA") t.truth.push_back(detail::parse_number(f[3], no));
        }
        harness::PosteriorSummary p;
        p.mean = detail::parse_number(f[4], no);
        p.median = detail::parse_number(f[5], no);
        p.sd = detail::parse_number(f[6], no);
        for (std::size_t l = 0; l < 3; ++l)
            p.intervals[l] = {detail::parse_number(f[7 + 2 * l], no), detail::parse_number(f[8 + 2 * l], no)};
        p.ess = detail::parse_number(f[13], no);
        r.params.push_back(p);
    }
    return t;
}

inline void write_metrics(std::ostream& os, const harness::MetricsTable& t) {
    os << "parameter,bias_mean,bias_median,avg_sd,cov80,cov90,cov95\n";
    for (const auto& row : t.rows) {
        os << row.parameter << ',' << fmt(row.bias_mean) << ',' << fmt(row.bias_median) << ',' << fmt(row.avg_sd);
        for (double c : row.coverage) os << ',' << fmt(c);
        os << '\n';
    }
}

// Run manifest: the full configuration plus what calibration and sampling did.
inline nlohmann::json manifest(const harness::Study& study, const std::vector<harness::ReplicateResult>& results) {
    using nlohmann::json;
    const auto& c = study.config();
    json m;
    m["config"] = harness::to_config_text(c);
    m["model"] = c.model;
    m["method"] = c.method;
    m["master_seed"] = c.seed;
    m["parameters"] = study.model().param_names;
    if (study.simulated()) m["truth"] = study.truth();
    m["central"] = study.central();
    std::size_t total = 0, excluded = 0;
    json reps = json::array();
    for (const auto& r : results) {
        json j;
        j["replicate"] = r.index;
        j["seed"] = {{"master", c.seed}, {"replicate", r.index}};
        j["ok"] = r.ok;
        if (!r.ok) {
            j["error"] = r.error;
            ++excluded;
        } else {
            if (std::isfinite(r.epsilon)) j["epsilon"] = r.epsilon;
            if (r.m) j["m"] = r.m;
            if (!r.weights.empty()) j["weights"] = r.weights;
            j["acceptance"] = r.acceptance;
            j["mcmc_simulations"] = r.simulations;
            j["calibration_simulations"] = r.calibration_simulations;
            j["failed_estimates"] = r.failed_estimates;
            std::vector<double> ess;
            for (const auto& p : r.params) ess.push_back(p.ess);
            j["ess"] = ess;
        }
        total += r.simulations + r.calibration_simulations;
        reps.push_back(j);
    }
    m["replicates"] = reps;
    m["excluded_replicates"] = excluded;
    m["total_simulations"] = total;
    return m;
}

}  // namespace lfi::io
