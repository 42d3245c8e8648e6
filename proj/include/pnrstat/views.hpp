// Copyright 2026 The pnrstat Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Plot-ready tables and run provenance for the command-line tool.

#include <algorithm>
#include <string>
#include <vector>

#include "distributions.hpp"
#include "io.hpp"

namespace pnrstat {

/// Joint matrix re-indexed by total S = n_h + n_v and difference D = n_h - n_v.
struct SumDifferenceView {
    struct Row {
        int sum = 0;
        int difference = 0;
        double value = 0.0;
        friend bool operator==(Row const&, Row const&) = default;
    };
    std::vector<Row> rows;
};

/// Nonzero cells only, ordered by S then D.
inline SumDifferenceView sum_difference_view(Eigen::MatrixXd const& m) {
    SumDifferenceView v;
    for (Eigen::Index h = 0; h < m.rows(); ++h)
        for (Eigen::Index w = 0; w < m.cols(); ++w)
            if (m(h, w) != 0.0)
                v.rows.push_back({static_cast<int>(h + w), static_cast<int>(h - w), m(h, w)});
    std::sort(v.rows.begin(), v.rows.end(), [](auto const& a, auto const& b) {
        return a.sum != b.sum ? a.sum < b.sum : a.difference < b.difference;
    });
    return v;
}

inline SumDifferenceView sum_difference_view(JointDistribution const& j) { return sum_difference_view(j.probs()); }

/// Outer product of the marginals, the uncorrelated reference curve.
inline Eigen::MatrixXd marginal_product(JointDistribution const& j) {
    double const total = j.total();
    if (total <= 0.0) return Eigen::MatrixXd::Zero(j.probs().rows(), j.probs().cols());
    return j.probs().rowwise().sum() * j.probs().colwise().sum() / total;
}

namespace io {

inline std::string sum_difference_to_csv(SumDifferenceView const& v) {
    std::string out = "S,D,value\n";
    for (auto const& r : v.rows)
        out += std::to_string(r.sum) + "," + std::to_string(r.difference) + "," + format_double(r.value) + "\n";
    return out;
}

inline SumDifferenceView sum_difference_from_csv(std::string const& text) {
    auto const lines = detail::split(text, '\n');
    if (lines.empty() || lines[0] != "S,D,value") throw IoError("sum/difference table must start with 'S,D,value'");
    SumDifferenceView v;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        auto const cells = detail::split(lines[i], ',');
        if (cells.size() != 3) throw IoError("sum/difference row must have three fields");
        v.rows.push_back({detail::parse_number<int>(cells[0]), detail::parse_number<int>(cells[1]),
                          detail::parse_number<double>(cells[2])});
    }
    return v;
}

}  // namespace io

/// Provenance record written next to every command's outputs.
struct RunManifest {
    std::string command;
    Json config;
    std::uint64_t seed = 0;
    std::string tool_version;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    double wall_seconds = 0.0;

    [[nodiscard]] Json to_json() const {
        return {{"command", command},   {"config", config},   {"seed", seed},
                {"tool_version", tool_version}, {"inputs", inputs}, {"outputs", outputs},
                {"wall_seconds", wall_seconds}};
    }
};

}  // namespace pnrstat
