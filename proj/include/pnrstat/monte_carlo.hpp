// Copyright 2026 The pnrstat Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Event-level simulation of the source and both detectors. This is the
// brute-force counterpart of the matrix channel: it never builds a transfer
// matrix, it draws photons and counts one pulse at a time.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "detector_channel.hpp"
#include "distributions.hpp"
#include "errors.hpp"

namespace pnrstat {

using Rng = std::mt19937_64;
using CountGrid = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

/// Independent generator for stream `stream` of a 64-bit seed.
inline Rng make_stream(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                      0x9e3779b9U};
    return Rng(seq);
}

/// Raw data: event counts per (n_h, n_v) cell plus events outside the window.
struct CountsMatrix {
    CountGrid counts;
    std::int64_t shots = 0;
    std::int64_t overflow = 0;

    CountsMatrix() = default;
    explicit CountsMatrix(int n_max) : counts(CountGrid::Zero(n_max + 1, n_max + 1)) {}

    [[nodiscard]] int n_max() const { return static_cast<int>(counts.rows()) - 1; }

    void record(int n_h, int n_v) {
        ++shots;
        if (n_h > n_max() || n_v > n_max()) {
            ++overflow;
        } else {
            ++counts(n_h, n_v);
        }
    }

    CountsMatrix& operator+=(CountsMatrix const& other) {
        detail::require_contract(other.n_max() == n_max(), "cannot merge counts of different size");
        counts += other.counts;
        shots += other.shots;
        overflow += other.overflow;
        return *this;
    }

    void validate() const {
        detail::require_contract(counts.rows() == counts.cols() && counts.rows() >= 1,
                                 "counts must be a non-empty square matrix");
        detail::require_domain((counts.array() >= 0).all() && overflow >= 0, "counts must be >= 0");
        detail::require_domain(shots >= 1, "shots must be >= 1");
        detail::require_domain(counts.sum() + overflow == shots, "counts + overflow must equal shots");
    }

    friend bool operator==(CountsMatrix const& a, CountsMatrix const& b) {
        return a.shots == b.shots && a.overflow == b.overflow && a.counts.rows() == b.counts.rows() &&
               a.counts == b.counts;
    }
};

struct SimConfig {
    SourceParams source;
    DetectorParams det_h;
    DetectorParams det_v;
    std::int64_t shots = 1;
    std::uint64_t seed = 0;
    int n_max = 40;

    void validate() const {
        source.validate();
        det_h.validate();
        det_v.validate();
        detail::require_domain(shots >= 1, "shots must be >= 1");
        detail::require_contract(n_max >= 0, "n_max must be >= 0");
    }
};

namespace detail {

inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline int sample_binomial(int n, double p, Rng& rng) {
    if (p <= 0.0 || n <= 0) return 0;
    if (p >= 1.0) return n;
    if (n <= 64) {
        int k = 0;
        for (int i = 0; i < n; ++i) k += uniform01(rng) < p ? 1 : 0;
        return k;
    }
    if (p > 0.5) return n - sample_binomial(n, 1.0 - p, rng);
    // Geometric waiting times between successes; exact, O(n p) draws.
    double const log_q = std::log1p(-p);
    int k = 0;
    double pos = 0.0;
    while (true) {
        pos += std::floor(std::log(1.0 - uniform01(rng)) / log_q) + 1.0;
        if (pos > n) return k;
        ++k;
    }
}

inline std::int64_t sample_poisson(double mean, Rng& rng) {
    if (mean <= 0.0) return 0;
    if (mean < 30.0) {
        // Knuth's multiplicative method
        double const limit = std::exp(-mean);
        std::int64_t k = 0;
        double prod = uniform01(rng);
        while (prod > limit) {
            ++k;
            prod *= uniform01(rng);
        }
        return k;
    }
    return std::poisson_distribution<std::int64_t>(mean)(rng);
}

}  // namespace detail

/// Thermal draw by inverse CDF: P(N >= n) = (m / (m+1))^n.
inline int sample_thermal(double mean, Rng& rng) {
    if (mean <= 0.0) return 0;
    double const u = 1.0 - detail::uniform01(rng);  // (0, 1]
    double const n = std::floor(std::log(u) / std::log(mean / (mean + 1.0)));
    return n > 1e9 ? 1000000000 : static_cast<int>(n);
}

/// One pulse of the source: correlated pair with probability g, else two independent thermal modes.
inline std::pair<int, int> sample_pair(SourceParams const& source, Rng& rng) {
    if (detail::uniform01(rng) < source.correlation) {
        int const n = sample_thermal(source.mean_photons, rng);
        return {n, n};
    }
    int const nh = sample_thermal(source.mean_photons, rng);
    int const nv = sample_thermal(source.mean_photons, rng);
    return {nh, nv};
}

/// Surviving photons plus dark counts, then at most one crosstalk count per fired cell.
inline int detect_count(int n, DetectorParams const& params, Rng& rng) {
    int fired = detail::sample_binomial(n, params.efficiency, rng);
    fired += static_cast<int>(detail::sample_poisson(params.dark_mean, rng));
    return fired + detail::sample_binomial(fired, params.crosstalk, rng);
}

/// Shots are split into fixed-size shards, each with its own stream
/// (seed, shard index). The plan depends only on the config, so the merged
/// result does not depend on how many threads run it.
inline constexpr std::int64_t kShardShots = std::int64_t{1} << 18;

inline CountsMatrix simulate_shard(SimConfig const& config, std::int64_t shard) {
    Rng rng = make_stream(config.seed, static_cast<std::uint64_t>(shard));
    std::int64_t const begin = shard * kShardShots;
    std::int64_t const end = std::min(config.shots, begin + kShardShots);
    CountsMatrix out(config.n_max);
    for (std::int64_t i = begin; i < end; ++i) {
        auto const [nh, nv] = sample_pair(config.source, rng);
        out.record(detect_count(nh, config.det_h, rng), detect_count(nv, config.det_v, rng));
    }
    return out;
}

inline unsigned default_workers() { return std::max(1U, std::thread::hardware_concurrency()); }

inline CountsMatrix simulate(SimConfig const& config, unsigned workers = default_workers()) {
    config.validate();
    std::int64_t const n_shards = (config.shots + kShardShots - 1) / kShardShots;
    std::vector<CountsMatrix> parts(static_cast<std::size_t>(n_shards));
    auto run = [&](unsigned w) {
        for (std::int64_t s = w; s < n_shards; s += workers) parts[s] = simulate_shard(config, s);
    };
    workers = std::max(1U, std::min<unsigned>(workers, static_cast<unsigned>(n_shards)));
    if (workers == 1) {
        run(0);
    } else {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(run, w);
    }
    CountsMatrix total(config.n_max);
    for (auto const& p : parts) total += p;
    return total;
}

/// Counts divided by shots; overflow becomes tail mass.
inline JointDistribution normalize(CountsMatrix const& counts) {
    counts.validate();
    double const shots = static_cast<double>(counts.shots);
    return {counts.counts.cast<double>() / shots, static_cast<double>(counts.overflow) / shots};
}

}  // namespace pnrstat
