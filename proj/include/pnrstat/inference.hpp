// Copyright 2026 The pnrstat Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Two-stage least-squares reconstruction of the source from a counts matrix.
//
// Stage 1 fits the per-mode detector model to the product of the empirical
// marginals. Binomial loss maps thermal(m) onto thermal(eta * m), so the
// marginals only identify the detected means eta_i * <n>, the dark means and
// the crosstalk probabilities. Stage 2 fits the full joint matrix for g,
// holding those fixed; <n> is either supplied (calibrated source) or fitted
// alongside g, in which case eta_i = detected_mean_i / <n>.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "detector_channel.hpp"
#include "distributions.hpp"
#include "errors.hpp"
#include "measures.hpp"
#include "monte_carlo.hpp"
#include "optimizer.hpp"

namespace pnrstat {

enum class Weighting { unweighted, poisson };

struct FitConfig {
    int max_iterations = 20000;
    double convergence_tol = 1e-9;
    Weighting weighting = Weighting::poisson;
    int n_max = 40;
    /// Known source mean. When set, stage 2 has g as its only free parameter.
    std::optional<double> mean_photons;
    /// Upper bound of the <n> search when it is fitted.
    double max_mean_photons = 30.0;

    void validate() const {
        detail::require_domain(max_iterations >= 1, "max_iterations must be >= 1");
        detail::require_domain(convergence_tol > 0.0, "convergence_tol must be > 0");
        detail::require_domain(n_max >= 1, "n_max must be >= 1");
        if (mean_photons) detail::require_domain(*mean_photons > 0.0, "mean_photons must be > 0");
    }
};

struct Stage1Result {
    double detected_mean_h = 0.0;
    double detected_mean_v = 0.0;
    double dark_h = 0.0;
    double dark_v = 0.0;
    double xtalk_h = 0.0;
    double xtalk_v = 0.0;
    double residual = 0.0;
    int iterations = 0;
};

struct FitResult {
    SourceParams source;
    DetectorParams det_h;
    DetectorParams det_v;
    double residual = 0.0;
    double g_error = 0.0;
    double distance_error = 0.0;
    Stage1Result stage1;
    int iterations = 0;
};

/// Base of every optimizer failure; lets callers map them to one exit path.
class ConvergenceFailure : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Iteration budget exhausted; carries the best parameters found so far.
template <class Result>
class NotConverged : public ConvergenceFailure {
  public:
    NotConverged(std::string const& what, Result best) : ConvergenceFailure(what), best_(std::move(best)) {}
    [[nodiscard]] Result const& best() const { return best_; }

  private:
    Result best_;
};

namespace detail {

inline double sq(double x) { return x * x; }
// Bounded parameterizations: squares reach 0 exactly, sin^2 covers [0, 1].
inline double to_unit(double t) { return sq(std::sin(t)); }
inline double from_unit(double p) { return std::asin(std::sqrt(std::clamp(p, 0.0, 1.0))); }
inline double to_nonneg(double t) { return t * t; }
inline double from_nonneg(double v) { return std::sqrt(std::max(v, 0.0)); }
constexpr double kMaxCrosstalk = 0.999;

inline double weighted_sse(Eigen::MatrixXd const& model, Eigen::MatrixXd const& target, Weighting w) {
    if (w == Weighting::unweighted) return (model - target).squaredNorm();
    return ((model - target).array().square() / target.array().max(1.0)).sum();
}

/// Detected single-mode law: thermal(detected mean), then darks, then crosstalk.
inline Eigen::VectorXd detected_marginal(double detected_mean, double dark, double xtalk, int n_in, int n_out) {
    int const n_thermal = std::min(4000, std::max(n_in, thermal_n_max(detected_mean, 1e-10)));
    Marginal const t = thermal_pmf(detected_mean, n_thermal);
    ChannelMatrix const ch = compose_channel({1.0, dark, xtalk}, n_thermal, n_out);
    return ch.entries() * t.probs;
}

inline int occupied_bins(Eigen::VectorXd const& v) { return static_cast<int>((v.array() > 0.0).count()); }

struct ModeMoments {
    double p0 = 1.0;
    double mean = 0.0;
    double fact2 = 0.0;
};

inline ModeMoments mode_moments(Eigen::VectorXd const& p) {
    ModeMoments m;
    double const total = p.sum();
    m.p0 = p(0) / total;
    for (Eigen::Index n = 0; n < p.size(); ++n) {
        m.mean += n * p(n) / total;
        m.fact2 += n * (n - 1.0) * p(n) / total;
    }
    return m;
}

/// Moment-matching start (detected mean, dark mean, crosstalk) for one mode.
///
/// For X = T + D (thermal T with mean d, Poisson D with mean Delta) and
/// Y = X + Bin(X, eps):  P(Y=0) = e^-Delta / (1+d),  E[Y] = (1+eps) E[X],
/// E[Y(Y-1)] = (1+eps)^2 E[X(X-1)] + 2 eps E[X],  E[X(X-1)] = 2d^2 + 2d Delta + Delta^2.
inline std::array<double, 3> moment_start(Eigen::VectorXd const& p) {
    ModeMoments const m = mode_moments(p);
    std::array<double, 3> best{std::max(m.mean, 1e-6), 0.0, 0.0};
    double best_err = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 50; ++i) {
        double const eps = 0.01 * i;
        double const mu_x = m.mean / (1.0 + eps);
        // Delta from the zero bin, by bisection on [0, mu_x].
        double lo = 0.0, hi = mu_x;
        for (int it = 0; it < 60; ++it) {
            double const mid = 0.5 * (lo + hi);
            double const p0 = std::exp(-mid) / (1.0 + mu_x - mid);
            (p0 > m.p0 ? lo : hi) = mid;
        }
        double const dark = 0.5 * (lo + hi);
        double const d = std::max(mu_x - dark, 1e-6);
        double const fx = 2 * d * d + 2 * d * dark + dark * dark;
        double const err = std::abs((1 + eps) * (1 + eps) * fx + 2 * eps * mu_x - m.fact2);
        if (err < best_err) {
            best_err = err;
            best = {d, dark, eps};
        }
    }
    return best;
}

inline Stage1Result unpack_stage1(std::vector<double> const& x) {
    Stage1Result r;
    r.detected_mean_h = to_nonneg(x[0]);
    r.dark_h = to_nonneg(x[1]);
    r.xtalk_h = kMaxCrosstalk * to_unit(x[2]);
    r.detected_mean_v = to_nonneg(x[3]);
    r.dark_v = to_nonneg(x[4]);
    r.xtalk_v = kMaxCrosstalk * to_unit(x[5]);
    return r;
}

}  // namespace detail

/// Fits the per-mode channel on thermal marginals to the product of the empirical marginals.
inline Stage1Result fit_stage1(CountsMatrix const& counts, FitConfig const& config = {}) {
    counts.validate();
    config.validate();
    Eigen::MatrixXd const c = counts.counts.cast<double>();
    Eigen::VectorXd const ph = c.rowwise().sum();
    Eigen::VectorXd const pv = c.colwise().sum().transpose();
    detail::require_domain(detail::occupied_bins(ph) >= 2 && detail::occupied_bins(pv) >= 2,
                           "each marginal needs at least two occupied count bins");

    double const shots = static_cast<double>(counts.shots);
    // Product of empirical marginals, in counts.
    Eigen::MatrixXd const target = ph * pv.transpose() / shots;
    int const n_out = counts.n_max();
    int const n_in = std::max(config.n_max, n_out);

    auto objective = [&](std::vector<double> const& x) {
        Stage1Result const r = detail::unpack_stage1(x);
        Eigen::VectorXd const mh = detail::detected_marginal(r.detected_mean_h, r.dark_h, r.xtalk_h, n_in, n_out);
        Eigen::VectorXd const mv = detail::detected_marginal(r.detected_mean_v, r.dark_v, r.xtalk_v, n_in, n_out);
        return detail::weighted_sse(shots * mh * mv.transpose(), target, config.weighting);
    };

    auto const sh = detail::moment_start(ph);
    auto const sv = detail::moment_start(pv);
    std::vector<double> start{detail::from_nonneg(sh[0]), detail::from_nonneg(sh[1]),
                              detail::from_unit(sh[2] / detail::kMaxCrosstalk), detail::from_nonneg(sv[0]),
                              detail::from_nonneg(sv[1]), detail::from_unit(sv[2] / detail::kMaxCrosstalk)};
    SimplexOptions opts;
    opts.max_iterations = config.max_iterations;
    opts.tolerance = config.convergence_tol;
    SimplexResult const res = nelder_mead(objective, start, opts);

    Stage1Result out = detail::unpack_stage1(res.point);
    out.residual = res.value;
    out.iterations = res.iterations;
    if (!res.converged) throw NotConverged<Stage1Result>("stage 1 fit did not converge", out);
    return out;
}

namespace detail {

/// Forward model of the full joint matrix, in probability units.
class JointModel {
  public:
    JointModel(Stage1Result const& s1, int n_in, int n_out) : s1_(s1), n_in_(n_in), n_out_(n_out) {}

    /// Input truncation grows with <n> so the thermal tail stays negligible.
    [[nodiscard]] int input_max(double mean) const {
        return std::min(kMaxInput, std::max(n_in_, thermal_n_max(mean, kTailTolerance)));
    }

    static constexpr double kTailTolerance = 1e-10;
    static constexpr int kMaxInput = 4000;

    [[nodiscard]] double min_mean() const { return std::max(s1_.detected_mean_h, s1_.detected_mean_v); }

    [[nodiscard]] DetectorParams det_h(double mean) const {
        return {std::clamp(s1_.detected_mean_h / mean, 1e-300, 1.0), s1_.dark_h, s1_.xtalk_h};
    }
    [[nodiscard]] DetectorParams det_v(double mean) const {
        return {std::clamp(s1_.detected_mean_v / mean, 1e-300, 1.0), s1_.dark_v, s1_.xtalk_v};
    }

    /// Pieces of C_h P C_v^T that do not depend on g.
    struct Parts {
        Eigen::MatrixXd correlated;
        Eigen::MatrixXd product;
    };

    [[nodiscard]] Parts parts(double mean) const {
        int const n_in = input_max(mean);
        ChannelMatrix const ch = compose_channel(det_h(mean), n_in, n_out_);
        ChannelMatrix const cv = compose_channel(det_v(mean), n_in, n_out_);
        Marginal const t = thermal_pmf(mean, n_in);
        Parts p;
        p.correlated = ch.entries() * t.probs.asDiagonal() * cv.entries().transpose();
        p.product = (ch.entries() * t.probs) * (cv.entries() * t.probs).transpose();
        return p;
    }

  private:
    Stage1Result s1_;
    int n_in_;
    int n_out_;
};

}  // namespace detail

/// Fits g (and <n> unless configured) to the full joint matrix with the stage-1 detector fixed.
inline FitResult fit_stage2(CountsMatrix const& counts, Stage1Result const& stage1, FitConfig const& config = {}) {
    counts.validate();
    config.validate();
    detail::require_domain(stage1.detected_mean_h > 0.0 && stage1.detected_mean_v > 0.0,
                           "stage 1 detected means must be positive");
    Eigen::MatrixXd const target = counts.counts.cast<double>();
    double const shots = static_cast<double>(counts.shots);
    int const n_out = counts.n_max();
    int const n_in = std::max(config.n_max, n_out);
    detail::JointModel const model(stage1, n_in, n_out);

    auto sse_at = [&](detail::JointModel::Parts const& p, double g) {
        return detail::weighted_sse(shots * (g * p.correlated + (1.0 - g) * p.product), target, config.weighting);
    };

    // Moment-style start for g: excess of the mean interior ratio.
    double g_start = 0.5;
    try {
        g_start = std::clamp(mean_interior_ratio(ratio_matrix(normalize(counts))) - 1.0, 0.0, 1.0);
    } catch (DomainError const&) {
    }

    FitResult out;
    out.stage1 = stage1;
    double mean = 0.0;
    double g = 0.0;
    if (config.mean_photons) {
        mean = *config.mean_photons;
        detail::require_domain(mean >= model.min_mean(), "mean_photons below a detected mean implies efficiency > 1");
        auto const parts = model.parts(mean);
        SimplexResult const res = bounded_scalar_minimize([&](double gg) { return sse_at(parts, gg); }, 0.0, 1.0,
                                                          41, 1e-9, config.max_iterations);
        g = res.point[0];
        out.residual = res.value;
        out.iterations = res.iterations;
        if (!res.converged) {
            out.source = {mean, g};
            throw NotConverged<FitResult>("stage 2 fit did not converge", out);
        }
    } else {
        double const floor = model.min_mean();
        double const span = std::max(config.max_mean_photons - floor, 1e-6);
        // <n> = floor + span * sin^2(u), g = sin^2(v)
        auto unpack = [&](std::vector<double> const& x) {
            return std::pair{floor + span * detail::to_unit(x[0]), detail::to_unit(x[1])};
        };
        auto objective = [&](std::vector<double> const& x) {
            auto const [m, gg] = unpack(x);
            return sse_at(model.parts(m), gg);
        };
        SimplexOptions opts;
        opts.max_iterations = config.max_iterations;
        opts.tolerance = config.convergence_tol;
        SimplexResult best;
        int iterations = 0;
        bool converged = true;
        // A few starts along <n>: the g-<n> valley is long and shallow.
        for (double m0 : {1.0, 4.0, 15.0}) {
            double const m_start = std::clamp(floor + m0, floor, floor + span);
            std::vector<double> start{detail::from_unit((m_start - floor) / span), detail::from_unit(g_start)};
            SimplexResult res = nelder_mead(objective, start, opts);
            iterations += res.iterations;
            converged = converged && res.converged;
            if (res.value < best.value) best = std::move(res);
        }
        std::tie(mean, g) = unpack(best.point);
        out.residual = best.value;
        out.iterations = iterations;
        if (!converged) {
            out.source = {mean, g};
            throw NotConverged<FitResult>("stage 2 fit did not converge", out);
        }
    }
    out.source = {mean, g};
    out.det_h = model.det_h(mean);
    out.det_v = model.det_v(mean);
    return out;
}

inline FitResult fit(CountsMatrix const& counts, FitConfig const& config = {}) {
    return fit_stage2(counts, fit_stage1(counts, config), config);
}

/// The pre-detector model at the fitted source parameters.
inline JointDistribution reconstruct(FitResult const& fit, int n_max) { return mixture_joint(fit.source, n_max); }

struct BootstrapResult {
    double g_error = 0.0;
    double distance_error = 0.0;
    std::vector<double> g_samples;
    std::vector<double> distance_samples;
};

struct BootstrapOptions {
    bool refit = true;  // false: distance spread only
    unsigned workers = default_workers();
};

/// Every cell count c replaced by an independent Poisson(c) draw; shots follow.
inline CountsMatrix poisson_resample(CountsMatrix const& counts, Rng& rng) {
    CountsMatrix out(counts.n_max());
    for (Eigen::Index j = 0; j < counts.counts.cols(); ++j)
        for (Eigen::Index i = 0; i < counts.counts.rows(); ++i)
            out.counts(i, j) = detail::sample_poisson(static_cast<double>(counts.counts(i, j)), rng);
    out.overflow = detail::sample_poisson(static_cast<double>(counts.overflow), rng);
    out.shots = out.counts.sum() + out.overflow;
    detail::require_domain(out.shots >= 1, "Poisson resample is empty");
    return out;
}

namespace detail {

inline double sample_std(std::vector<double> const& v) {
    if (v.size() < 2) return 0.0;
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double acc = 0.0;
    for (double x : v) acc += (x - mean) * (x - mean);
    return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

}  // namespace detail

/// Bootstrap with an explicit RNG stream index per resample.
inline BootstrapResult bootstrap_streams(CountsMatrix const& counts, std::vector<std::uint64_t> const& streams,
                                         std::uint64_t seed, FitConfig const& config,
                                         BootstrapOptions const& opts = {}) {
    detail::require_domain(streams.size() >= 2, "bootstrap needs at least two resamples");
    counts.validate();
    std::optional<Stage1Result> stage1;
    if (opts.refit) stage1 = fit_stage1(counts, config);

    std::size_t const n = streams.size();
    BootstrapResult out;
    out.g_samples.assign(opts.refit ? n : 0, 0.0);
    out.distance_samples.assign(n, 0.0);
    auto one = [&](std::size_t r) {
        Rng rng = make_stream(seed, streams[r]);
        CountsMatrix const resample = poisson_resample(counts, rng);
        out.distance_samples[r] = product_distance(singular_spectrum(normalize(resample)));
        if (opts.refit) {
            try {
                out.g_samples[r] = fit_stage2(resample, *stage1, config).source.correlation;
            } catch (NotConverged<FitResult> const& e) {
                out.g_samples[r] = e.best().source.correlation;
            }
        }
    };
    unsigned const workers = std::max(1U, std::min<unsigned>(opts.workers, static_cast<unsigned>(n)));
    if (workers == 1) {
        for (std::size_t r = 0; r < n; ++r) one(r);
    } else {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                for (std::size_t r = w; r < n; r += workers) one(r);
            });
    }
    out.g_error = detail::sample_std(out.g_samples);
    out.distance_error = detail::sample_std(out.distance_samples);
    return out;
}

inline BootstrapResult bootstrap(CountsMatrix const& counts, int n_resamples, std::uint64_t seed,
                                 FitConfig const& config = {}, BootstrapOptions const& opts = {}) {
    detail::require_domain(n_resamples >= 2, "bootstrap needs at least two resamples");
    std::vector<std::uint64_t> streams(static_cast<std::size_t>(n_resamples));
    for (int r = 0; r < n_resamples; ++r) streams[r] = static_cast<std::uint64_t>(r);
    return bootstrap_streams(counts, streams, seed, config, opts);
}

}  // namespace pnrstat
