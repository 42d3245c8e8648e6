// Copyright 2026 The pnrstat Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// The four pipeline commands behind the `pnrstat` executable. They are pure
// functions of (input files, config, seed): every data file they write is
// byte-identical across reruns. Only manifest.json carries wall-clock time.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "detector_channel.hpp"
#include "distributions.hpp"
#include "inference.hpp"
#include "io.hpp"
#include "measures.hpp"
#include "monte_carlo.hpp"
#include "views.hpp"

namespace pnrstat {

inline constexpr char const* kToolVersion = "0.1.0";

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int config = 2;
inline constexpr int numerical = 3;
inline constexpr int io = 4;
}  // namespace exit_code

/// Flag overrides shared by all commands; unset fields fall back to the config file.
struct CommandOptions {
    std::optional<std::filesystem::path> config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::int64_t> shots;
    std::filesystem::path out_dir = ".";
    std::optional<int> bootstrap;
    std::optional<std::vector<double>> g_list;
    std::optional<std::vector<double>> gamma_list;
    std::optional<Weighting> weighting;
    bool reconstruct = false;
    unsigned workers = default_workers();
};

/// Everything a config file can hold, after flag overrides.
struct ResolvedConfig {
    SimConfig sim;
    FitConfig fit;
    int bootstrap = 0;
    std::vector<double> g_list;
    std::vector<double> gamma_list;

    [[nodiscard]] Json to_json() const {
        Json j = io::to_json(sim);
        j["fit"] = io::to_json(fit);
        j["bootstrap"] = bootstrap;
        if (!g_list.empty()) j["g_list"] = g_list;
        if (!gamma_list.empty()) j["gamma_list"] = gamma_list;
        return j;
    }
};

inline ResolvedConfig resolve_config(CommandOptions const& opts) {
    ResolvedConfig rc;
    if (opts.config_path) {
        std::string const text = io::read_file(*opts.config_path);
        io::parse_config(text, [&](Json const& j) {
            rc.sim = io::sim_config_from_json(j);
            if (j.contains("fit")) rc.fit = io::fit_config_from_json(j.at("fit"));
            rc.bootstrap = io::detail::get_or(j, "bootstrap", 0);
            if (j.contains("g_list")) rc.g_list = j.at("g_list").get<std::vector<double>>();
            if (j.contains("gamma_list")) rc.gamma_list = j.at("gamma_list").get<std::vector<double>>();
            return 0;
        });
    }
    if (opts.seed) rc.sim.seed = *opts.seed;
    if (opts.shots) rc.sim.shots = *opts.shots;
    if (opts.bootstrap) rc.bootstrap = *opts.bootstrap;
    if (opts.g_list) rc.g_list = *opts.g_list;
    if (opts.gamma_list) rc.gamma_list = *opts.gamma_list;
    if (opts.weighting) rc.fit.weighting = *opts.weighting;
    try {
        rc.sim.validate();
        rc.fit.validate();
    } catch (std::logic_error const& e) {
        throw ConfigError(std::string("invalid configuration: ") + e.what());
    }
    if (rc.bootstrap == 1 || rc.bootstrap < 0) throw ConfigError("bootstrap needs 0 (off) or >= 2 resamples");
    for (double g : rc.g_list)
        if (!(g >= 0.0 && g <= 1.0)) throw ConfigError("g values must lie in [0, 1]");
    return rc;
}

namespace detail {

class RunRecorder {
  public:
    RunRecorder(std::string command, ResolvedConfig const& rc, std::filesystem::path out_dir)
        : out_dir_(std::move(out_dir)), start_(std::chrono::steady_clock::now()) {
        manifest_.command = std::move(command);
        manifest_.config = rc.to_json();
        manifest_.seed = rc.sim.seed;
        manifest_.tool_version = kToolVersion;
        std::error_code ec;
        std::filesystem::create_directories(out_dir_, ec);
        if (ec) throw IoError("cannot create output directory " + out_dir_.string() + ": " + ec.message());
    }

    static constexpr char const* kManifestName = "manifest.json";

    void input(std::filesystem::path const& p) { manifest_.inputs.push_back(p.string()); }

    std::filesystem::path output(std::string const& name) {
        manifest_.outputs.push_back(name);
        return out_dir_ / name;
    }

    void finish() {
        manifest_.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        io::write_atomic(out_dir_ / kManifestName, io::dump(manifest_.to_json()));
    }

  private:
    std::filesystem::path out_dir_;
    RunManifest manifest_;
    std::chrono::steady_clock::time_point start_;
};

inline std::string with_manifest(Json j) {
    j["manifest"] = RunRecorder::kManifestName;
    return io::dump(j);
}

/// Seed for sweep row i; rows get unrelated streams but stay reproducible.
inline std::uint64_t row_seed(std::uint64_t seed, std::size_t row) {
    return seed + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(row) + 1);
}

inline std::string fmt(double v) { return io::format_double(v); }

}  // namespace detail

/// simulate: config -> counts.csv
inline CountsMatrix cmd_simulate(CommandOptions const& opts) {
    ResolvedConfig const rc = resolve_config(opts);
    detail::RunRecorder rec("simulate", rc, opts.out_dir);
    if (opts.config_path) rec.input(*opts.config_path);
    CountsMatrix const counts = simulate(rc.sim, opts.workers);
    io::write_counts(rec.output("counts.csv"), counts, detail::RunRecorder::kManifestName);
    rec.finish();
    return counts;
}

/// measure: counts.csv -> report.json, sum_difference.csv, sum_difference_product.csv
inline CorrelationReport cmd_measure(std::filesystem::path const& counts_path, CommandOptions const& opts) {
    ResolvedConfig const rc = resolve_config(opts);
    detail::RunRecorder rec("measure", rc, opts.out_dir);
    rec.input(counts_path);
    CountsMatrix const counts = io::read_counts(counts_path);
    JointDistribution const joint = normalize(counts);
    CorrelationReport const report = correlation_report(joint);

    io::write_atomic(rec.output("report.json"), detail::with_manifest(io::to_json(report)));
    io::write_atomic(rec.output("sum_difference.csv"), io::sum_difference_to_csv(sum_difference_view(joint)));
    io::write_atomic(rec.output("sum_difference_product.csv"),
                     io::sum_difference_to_csv(sum_difference_view(marginal_product(joint))));
    rec.finish();
    return report;
}

/// fit: counts.csv -> fit.json (+ reconstructed.csv)
inline FitResult cmd_fit(std::filesystem::path const& counts_path, CommandOptions const& opts) {
    ResolvedConfig const rc = resolve_config(opts);
    detail::RunRecorder rec("fit", rc, opts.out_dir);
    rec.input(counts_path);
    CountsMatrix const counts = io::read_counts(counts_path);
    FitResult result = fit(counts, rc.fit);
    if (rc.bootstrap >= 2) {
        BootstrapOptions bo;
        bo.workers = opts.workers;
        BootstrapResult const b = bootstrap(counts, rc.bootstrap, rc.sim.seed, rc.fit, bo);
        result.g_error = b.g_error;
        result.distance_error = b.distance_error;
    }
    io::write_atomic(rec.output("fit.json"), detail::with_manifest(io::to_json(result)));
    if (opts.reconstruct) {
        io::write_atomic(rec.output("reconstructed.csv"),
                         io::joint_to_csv(reconstruct(result, rc.fit.n_max), detail::RunRecorder::kManifestName));
    }
    rec.finish();
    return result;
}

struct SweepRow {
    double g_true = 0.0;
    double gamma = 0.0;
    double mean_ratio = 0.0;
    double distance = 0.0;
    double g_fitted = 0.0;
    double g_error = 0.0;
    double distance_error = 0.0;
};

inline std::string sweep_to_csv(std::vector<SweepRow> const& rows) {
    std::string out = "g_true,gamma,mean_R,distance,g_fitted,g_error,distance_error\n";
    for (auto const& r : rows) {
        out += detail::fmt(r.g_true) + "," + detail::fmt(r.gamma) + "," + detail::fmt(r.mean_ratio) + "," +
               detail::fmt(r.distance) + "," + detail::fmt(r.g_fitted) + "," + detail::fmt(r.g_error) + "," +
               detail::fmt(r.distance_error) + "\n";
    }
    return out;
}

/// sweep: base config + g list (or gamma list) -> sweep.csv, one row per value.
///
/// A gamma value is mapped to g = gamma / eta_v, the heralded-efficiency law
/// for herald H.
inline std::vector<SweepRow> cmd_sweep(CommandOptions const& opts) {
    ResolvedConfig const rc = resolve_config(opts);
    detail::RunRecorder rec("sweep", rc, opts.out_dir);
    if (opts.config_path) rec.input(*opts.config_path);

    std::vector<double> gs = rc.g_list;
    for (double gamma : rc.gamma_list) {
        double const g = gamma / rc.sim.det_v.efficiency;
        if (!(g >= 0.0 && g <= 1.0)) throw ConfigError("gamma value implies g outside [0, 1]");
        gs.push_back(g);
    }
    if (gs.empty()) throw ConfigError("sweep needs a g list or a gamma list");

    std::vector<SweepRow> rows;
    for (std::size_t i = 0; i < gs.size(); ++i) {
        SimConfig sim = rc.sim;
        sim.source.correlation = gs[i];
        sim.seed = detail::row_seed(rc.sim.seed, i);
        SweepRow row;
        row.g_true = gs[i];
        row.gamma = heralded_efficiency(sim.source, sim.det_h, sim.det_v, Mode::H);
        CountsMatrix const counts = simulate(sim, opts.workers);
        JointDistribution const joint = normalize(counts);
        row.mean_ratio = mean_interior_ratio(ratio_matrix(joint));
        row.distance = product_distance(singular_spectrum(joint));
        row.g_fitted = fit(counts, rc.fit).source.correlation;
        if (rc.bootstrap >= 2) {
            BootstrapOptions bo;
            bo.workers = opts.workers;
            BootstrapResult const b = bootstrap(counts, rc.bootstrap, sim.seed, rc.fit, bo);
            row.g_error = b.g_error;
            row.distance_error = b.distance_error;
        }
        rows.push_back(row);
    }
    io::write_atomic(rec.output("sweep.csv"), sweep_to_csv(rows));
    rec.finish();
    return rows;
}

}  // namespace pnrstat
