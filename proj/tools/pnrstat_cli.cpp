// Copyright 2026 The pnrstat Authors
// SPDX-License-Identifier: Apache-2.0

// pnrstat: simulate, measure, fit and sweep two-mode photon-number statistics.
//
//   pnrstat simulate --config run.json --out runs/a
//   pnrstat measure runs/a/counts.csv --out runs/a
//   pnrstat fit runs/a/counts.csv --config run.json --bootstrap 100 --out runs/a
//   pnrstat sweep --config run.json --g-list 0,0.25,0.5,1 --out runs/sweep

#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pnrstat/commands.hpp"

namespace {

std::vector<double> parse_list(std::string const& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            std::size_t pos = 0;
            out.push_back(std::stod(item, &pos));
            if (pos != item.size()) throw std::invalid_argument(item);
        } catch (std::logic_error const&) {
            throw pnrstat::ConfigError("not a number in list: '" + item + "'");
        }
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    using namespace pnrstat;

    CLI::App app{"Two-mode photon-number statistics through imperfect number-resolving detectors"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    CommandOptions opts;
    std::string config_path, out_dir = ".", g_list, gamma_list, weighting, counts_path;
    std::uint64_t seed = 0;
    std::int64_t shots = 0;
    int bootstrap = 0;
    unsigned workers = default_workers();

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON configuration file");
        sub->add_option("--seed", seed, "64-bit RNG seed (overrides config)");
        sub->add_option("--out", out_dir, "Output directory")->capture_default_str();
        sub->add_option("--workers", workers, "Worker threads for simulation and bootstrap")->capture_default_str();
    };

    CLI::App* sim = app.add_subcommand("simulate", "Event-level simulation to a counts matrix");
    add_common(sim);
    sim->add_option("--shots", shots, "Number of pulses (overrides config)");

    CLI::App* measure = app.add_subcommand("measure", "Correlation measures of a counts matrix");
    add_common(measure);
    measure->add_option("counts", counts_path, "Counts CSV")->required();

    CLI::App* fitcmd = app.add_subcommand("fit", "Two-stage least-squares fit of a counts matrix");
    add_common(fitcmd);
    fitcmd->add_option("counts", counts_path, "Counts CSV")->required();
    fitcmd->add_option("--bootstrap", bootstrap, "Poisson bootstrap resamples for error bars");
    fitcmd->add_option("--weighting", weighting, "Least-squares weighting")
        ->check(CLI::IsMember({"unweighted", "poisson"}));
    fitcmd->add_flag("--reconstruct", opts.reconstruct, "Also write the reconstructed source distribution");

    CLI::App* sweep = app.add_subcommand("sweep", "Simulate, measure and fit over a list of g (or gamma) values");
    add_common(sweep);
    sweep->add_option("--shots", shots, "Pulses per row (overrides config)");
    sweep->add_option("--g-list", g_list, "Comma-separated degrees of correlation");
    sweep->add_option("--gamma-list", gamma_list, "Comma-separated heralded efficiencies");
    sweep->add_option("--bootstrap", bootstrap, "Poisson bootstrap resamples per row");
    sweep->add_option("--weighting", weighting, "Least-squares weighting")
        ->check(CLI::IsMember({"unweighted", "poisson"}));

    try {
        app.parse(argc, argv);
    } catch (CLI::ParseError const& e) {
        int const rc = app.exit(e);
        return rc == 0 ? exit_code::ok : exit_code::config;
    }

    auto given = [](CLI::App* sub, char const* name) { return sub->count(name) > 0; };
    CLI::App* active = app.get_subcommands().front();

    try {
        if (!config_path.empty()) opts.config_path = config_path;
        if (given(active, "--seed")) opts.seed = seed;
        if (active->get_option_no_throw("--shots") && given(active, "--shots")) opts.shots = shots;
        if (active->get_option_no_throw("--bootstrap") && given(active, "--bootstrap")) opts.bootstrap = bootstrap;
        if (!g_list.empty()) opts.g_list = parse_list(g_list);
        if (!gamma_list.empty()) opts.gamma_list = parse_list(gamma_list);
        if (!weighting.empty()) opts.weighting = io::weighting_from_string(weighting);
        opts.out_dir = out_dir;
        opts.workers = workers;

        if (active == sim) {
            CountsMatrix const c = cmd_simulate(opts);
            std::cout << "wrote " << (opts.out_dir / "counts.csv").string() << " (" << c.shots << " shots, "
                      << c.overflow << " overflow)\n";
        } else if (active == measure) {
            CorrelationReport const r = cmd_measure(counts_path, opts);
            std::cout << "mean_R=" << r.mean_interior_ratio << " distance=" << r.product_distance
                      << " lee_witness=" << r.lee_witness << "\n";
        } else if (active == fitcmd) {
            FitResult const f = cmd_fit(counts_path, opts);
            std::cout << "g=" << f.source.correlation << " <n>=" << f.source.mean_photons << " g_error=" << f.g_error
                      << "\n";
        } else if (active == sweep) {
            auto const rows = cmd_sweep(opts);
            std::cout << "wrote " << rows.size() << " rows to " << (opts.out_dir / "sweep.csv").string() << "\n";
        }
    } catch (ConfigError const& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return exit_code::config;
    } catch (DomainError const& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return exit_code::config;
    } catch (ContractError const& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return exit_code::config;
    } catch (ConvergenceFailure const& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return exit_code::numerical;
    } catch (IoError const& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return exit_code::io;
    }
    return exit_code::ok;
}
