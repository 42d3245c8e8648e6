// Copyright 2026 The pnrstat Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// File formats.
//
// Matrix files are CSV. The first line is a header comment
//
//     # n_max=<k> shots=<s> overflow=<o>        (counts)
//     # n_max=<k> tail_mass=<t>                 (probabilities)
//
// followed by n_max+1 rows of n_max+1 comma-separated values, row index n_h.
// An optional trailing `# manifest=<path>` line names the run manifest.
// Probabilities are written with 17 significant digits so they read back
// bit-identically. Configs and results are JSON.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "detector_channel.hpp"
#include "distributions.hpp"
#include "errors.hpp"
#include "inference.hpp"
#include "measures.hpp"
#include "monte_carlo.hpp"

namespace pnrstat {

using Json = nlohmann::ordered_json;

/// Malformed or out-of-range configuration.
class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

namespace io {

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Writes via a temporary sibling and renames, so readers never see a partial file.
inline void write_atomic(std::filesystem::path const& path, std::string const& content) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out << content;
        if (!out.flush()) throw IoError("failed writing " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

inline std::string read_file(std::filesystem::path const& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string manifest_trailer(std::optional<std::string> const& manifest) {
    return manifest ? "# manifest=" + *manifest + "\n" : std::string{};
}

// ---- counts ---------------------------------------------------------------

inline std::string counts_to_csv(CountsMatrix const& c, std::optional<std::string> const& manifest = {}) {
    std::string out = "# n_max=" + std::to_string(c.n_max()) + " shots=" + std::to_string(c.shots) +
                      " overflow=" + std::to_string(c.overflow) + "\n";
    for (Eigen::Index i = 0; i < c.counts.rows(); ++i) {
        for (Eigen::Index j = 0; j < c.counts.cols(); ++j) {
            if (j) out += ',';
            out += std::to_string(c.counts(i, j));
        }
        out += '\n';
    }
    return out + manifest_trailer(manifest);
}

namespace detail {

struct Header {
    std::vector<std::pair<std::string, std::string>> fields;

    [[nodiscard]] std::string const& get(std::string const& key) const {
        for (auto const& [k, v] : fields)
            if (k == key) return v;
        throw IoError("matrix header is missing '" + key + "'");
    }
};

inline Header parse_header(std::string const& line) {
    if (line.size() < 2 || line[0] != '#') throw IoError("matrix file must start with a '#' header line");
    Header h;
    std::istringstream ss(line.substr(1));
    std::string tok;
    while (ss >> tok) {
        auto const eq = tok.find('=');
        if (eq == std::string::npos) throw IoError("bad header token '" + tok + "'");
        h.fields.emplace_back(tok.substr(0, eq), tok.substr(eq + 1));
    }
    return h;
}

inline std::vector<std::string> split(std::string const& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (ch == sep) {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

template <class T>
T parse_number(std::string const& s) {
    try {
        std::size_t pos = 0;
        T v{};
        if constexpr (std::is_same_v<T, double>) {
            v = std::stod(s, &pos);
        } else {
            v = static_cast<T>(std::stoll(s, &pos));
        }
        if (pos != s.size()) throw IoError("trailing characters in number '" + s + "'");
        return v;
    } catch (std::logic_error const&) {
        throw IoError("not a number: '" + s + "'");
    }
}

/// Splits a matrix file into header, (n_max+1)^2 cells and the optional manifest.
template <class T>
std::pair<Header, Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>> parse_matrix(std::string const& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty matrix file");
    Header h = parse_header(line);
    int const n_max = parse_number<int>(h.get("n_max"));
    if (n_max < 0) throw IoError("n_max must be >= 0");
    Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic> m(n_max + 1, n_max + 1);
    for (int i = 0; i <= n_max; ++i) {
        if (!std::getline(in, line)) throw IoError("matrix file has fewer rows than n_max+1");
        auto const cells = split(line, ',');
        if (static_cast<int>(cells.size()) != n_max + 1) throw IoError("row " + std::to_string(i) + " has wrong width");
        for (int j = 0; j <= n_max; ++j) m(i, j) = parse_number<T>(cells[j]);
    }
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        if (line.rfind("# manifest=", 0) == 0) {
            h.fields.emplace_back("manifest", line.substr(11));
            continue;
        }
        throw IoError("unexpected content after matrix rows");
    }
    return {std::move(h), std::move(m)};
}

}  // namespace detail

inline CountsMatrix counts_from_csv(std::string const& text) {
    auto [h, m] = detail::parse_matrix<std::int64_t>(text);
    CountsMatrix c;
    c.counts = std::move(m);
    c.shots = detail::parse_number<std::int64_t>(h.get("shots"));
    c.overflow = detail::parse_number<std::int64_t>(h.get("overflow"));
    try {
        c.validate();
    } catch (std::exception const& e) {
        throw IoError(std::string("inconsistent counts file: ") + e.what());
    }
    return c;
}

inline void write_counts(std::filesystem::path const& path, CountsMatrix const& c,
                         std::optional<std::string> const& manifest = {}) {
    write_atomic(path, counts_to_csv(c, manifest));
}

inline CountsMatrix read_counts(std::filesystem::path const& path) { return counts_from_csv(read_file(path)); }

// ---- probability matrices --------------------------------------------------

inline std::string joint_to_csv(JointDistribution const& j, std::optional<std::string> const& manifest = {}) {
    std::string out = "# n_max=" + std::to_string(j.n_max()) + " tail_mass=" + format_double(j.tail_mass()) + "\n";
    for (int a = 0; a <= j.n_max(); ++a) {
        for (int b = 0; b <= j.n_max(); ++b) {
            if (b) out += ',';
            out += format_double(j(a, b));
        }
        out += '\n';
    }
    return out + manifest_trailer(manifest);
}

inline JointDistribution joint_from_csv(std::string const& text) {
    auto [h, m] = detail::parse_matrix<double>(text);
    try {
        return {std::move(m), detail::parse_number<double>(h.get("tail_mass"))};
    } catch (DomainError const& e) {
        throw IoError(std::string("invalid probability matrix: ") + e.what());
    }
}

// ---- JSON: parameters ---------------------------------------------------------

namespace detail {

template <class T>
T get_or(Json const& j, char const* key, T fallback) {
    return j.contains(key) ? j.at(key).get<T>() : fallback;
}

}  // namespace detail

inline Json to_json(SourceParams const& s) {
    return {{"mean_photons", s.mean_photons}, {"correlation", s.correlation}};
}

inline Json to_json(DetectorParams const& d) {
    return {{"efficiency", d.efficiency}, {"dark_mean", d.dark_mean}, {"crosstalk", d.crosstalk}};
}

inline SourceParams source_from_json(Json const& j) {
    return {detail::get_or(j, "mean_photons", 0.0), detail::get_or(j, "correlation", 0.0)};
}

inline DetectorParams detector_from_json(Json const& j) {
    return {detail::get_or(j, "efficiency", 1.0), detail::get_or(j, "dark_mean", 0.0),
            detail::get_or(j, "crosstalk", 0.0)};
}

inline std::string to_string(Weighting w) { return w == Weighting::poisson ? "poisson" : "unweighted"; }

inline Weighting weighting_from_string(std::string const& s) {
    if (s == "poisson") return Weighting::poisson;
    if (s == "unweighted") return Weighting::unweighted;
    throw ConfigError("weighting must be 'poisson' or 'unweighted', got '" + s + "'");
}

inline Json to_json(FitConfig const& c) {
    Json j{{"max_iterations", c.max_iterations},
           {"convergence_tol", c.convergence_tol},
           {"weighting", to_string(c.weighting)},
           {"n_max", c.n_max},
           {"max_mean_photons", c.max_mean_photons}};
    j["mean_photons"] = c.mean_photons ? Json(*c.mean_photons) : Json(nullptr);
    return j;
}

inline FitConfig fit_config_from_json(Json const& j) {
    FitConfig c;
    c.max_iterations = detail::get_or(j, "max_iterations", c.max_iterations);
    c.convergence_tol = detail::get_or(j, "convergence_tol", c.convergence_tol);
    c.weighting = weighting_from_string(detail::get_or<std::string>(j, "weighting", "poisson"));
    c.n_max = detail::get_or(j, "n_max", c.n_max);
    c.max_mean_photons = detail::get_or(j, "max_mean_photons", c.max_mean_photons);
    if (j.contains("mean_photons") && !j.at("mean_photons").is_null()) c.mean_photons = j.at("mean_photons").get<double>();
    return c;
}

inline Json to_json(SimConfig const& c) {
    return {{"source", to_json(c.source)}, {"det_h", to_json(c.det_h)}, {"det_v", to_json(c.det_v)},
            {"shots", c.shots},            {"seed", c.seed},            {"n_max", c.n_max}};
}

inline SimConfig sim_config_from_json(Json const& j) {
    SimConfig c;
    if (j.contains("source")) c.source = source_from_json(j.at("source"));
    if (j.contains("det_h")) c.det_h = detector_from_json(j.at("det_h"));
    if (j.contains("det_v")) c.det_v = detector_from_json(j.at("det_v"));
    c.shots = detail::get_or<std::int64_t>(j, "shots", c.shots);
    c.seed = detail::get_or<std::uint64_t>(j, "seed", c.seed);
    c.n_max = detail::get_or(j, "n_max", c.n_max);
    return c;
}

/// Parses JSON text, mapping every parse or type error to ConfigError.
template <class F>
auto parse_config(std::string const& text, F&& build) {
    try {
        return build(Json::parse(text));
    } catch (Json::exception const& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
}

// ---- JSON: results ----------------------------------------------------------

inline Json to_json(Stage1Result const& s) {
    return {{"detected_mean_h", s.detected_mean_h}, {"detected_mean_v", s.detected_mean_v},
            {"dark_h", s.dark_h},                   {"dark_v", s.dark_v},
            {"xtalk_h", s.xtalk_h},                 {"xtalk_v", s.xtalk_v},
            {"residual", s.residual},               {"iterations", s.iterations}};
}

inline Stage1Result stage1_from_json(Json const& j) {
    Stage1Result s;
    s.detected_mean_h = j.at("detected_mean_h").get<double>();
    s.detected_mean_v = j.at("detected_mean_v").get<double>();
    s.dark_h = j.at("dark_h").get<double>();
    s.dark_v = j.at("dark_v").get<double>();
    s.xtalk_h = j.at("xtalk_h").get<double>();
    s.xtalk_v = j.at("xtalk_v").get<double>();
    s.residual = j.at("residual").get<double>();
    s.iterations = j.at("iterations").get<int>();
    return s;
}

inline Json to_json(FitResult const& f) {
    return {{"source", to_json(f.source)},   {"det_h", to_json(f.det_h)},
            {"det_v", to_json(f.det_v)},     {"residual", f.residual},
            {"g_error", f.g_error},          {"distance_error", f.distance_error},
            {"iterations", f.iterations},    {"stage1", to_json(f.stage1)}};
}

inline FitResult fit_result_from_json(Json const& j) {
    FitResult f;
    f.source = source_from_json(j.at("source"));
    f.det_h = detector_from_json(j.at("det_h"));
    f.det_v = detector_from_json(j.at("det_v"));
    f.residual = j.at("residual").get<double>();
    f.g_error = j.at("g_error").get<double>();
    f.distance_error = j.at("distance_error").get<double>();
    f.iterations = j.at("iterations").get<int>();
    f.stage1 = stage1_from_json(j.at("stage1"));
    return f;
}

inline Json to_json(CorrelationReport const& r) {
    return {{"mean_interior_ratio", r.mean_interior_ratio},
            {"product_distance", r.product_distance},
            {"heralded_efficiency", r.heralded_efficiency},
            {"lee_nonclassical", r.lee_nonclassical},
            {"lee_witness", r.lee_witness},
            {"singular_values", r.spectrum.values}};
}

inline CorrelationReport correlation_report_from_json(Json const& j) {
    CorrelationReport r;
    r.mean_interior_ratio = j.at("mean_interior_ratio").get<double>();
    r.product_distance = j.at("product_distance").get<double>();
    r.heralded_efficiency = j.at("heralded_efficiency").get<double>();
    r.lee_nonclassical = j.at("lee_nonclassical").get<bool>();
    r.lee_witness = j.at("lee_witness").get<double>();
    r.spectrum.values = j.at("singular_values").get<std::vector<double>>();
    return r;
}

/// JSON text with a trailing newline; nlohmann prints doubles round-trip exact.
inline std::string dump(Json const& j) { return j.dump(2) + "\n"; }

}  // namespace io
}  // namespace pnrstat
