// Copyright 2026 The pnrstat Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <vector>

#include "pnrstat/inference.hpp"
#include "pnrstat/measures.hpp"

namespace pnrstat {
namespace {

DetectorParams const kLabH{0.012, 0.11, 0.12};
DetectorParams const kLabV{0.010, 0.14, 0.11};

// Expected counts rounded to integers: noise-free data on which the true
// parameters are the exact least-squares optimum up to rounding.
CountsMatrix asimov(SourceParams const& src, DetectorParams const& h, DetectorParams const& v, double shots,
                    int n_max = 40) {
    JointDistribution const model = apply_two_mode(mixture_joint(src, 400), h, v, n_max);
    CountsMatrix c(n_max);
    c.counts = (model.probs() * shots).array().round().cast<std::int64_t>();
    c.overflow = static_cast<std::int64_t>(std::llround(model.tail_mass() * shots));
    c.shots = c.counts.sum() + c.overflow;
    return c;
}

TEST(Optimizer, NelderMeadRosenbrock) {
    auto f = [](std::vector<double> const& x) {
        return 100.0 * std::pow(x[1] - x[0] * x[0], 2) + std::pow(1.0 - x[0], 2);
    };
    SimplexResult const r = nelder_mead(f, {-1.2, 1.0});
    EXPECT_TRUE(r.converged);
    EXPECT_NEAR(r.point[0], 1.0, 1e-4);
    EXPECT_NEAR(r.point[1], 1.0, 1e-4);
    for (std::size_t i = 1; i < r.best_history.size(); ++i) EXPECT_LE(r.best_history[i], r.best_history[i - 1]);
}

TEST(Optimizer, IterationCapReportsNotConverged) {
    auto f = [](std::vector<double> const& x) { return x[0] * x[0] + x[1] * x[1]; };
    SimplexOptions opts;
    opts.max_iterations = 3;
    opts.max_restarts = 0;
    EXPECT_FALSE(nelder_mead(f, {5.0, 5.0}, opts).converged);
}

TEST(Optimizer, BoundedScalarStaysInBounds) {
    SimplexResult const inside = bounded_scalar_minimize([](double x) { return (x - 0.3) * (x - 0.3); }, 0.0, 1.0);
    EXPECT_NEAR(inside.point[0], 0.3, 1e-6);
    SimplexResult const edge = bounded_scalar_minimize([](double x) { return x; }, 0.0, 1.0);
    EXPECT_GE(edge.point[0], 0.0);
    EXPECT_LT(edge.point[0], 1e-6);
}

TEST(Stage1, VacuumOnlyCountsIsDomainError) {
    CountsMatrix c(5);
    c.counts(0, 0) = 1000;
    c.shots = 1000;
    EXPECT_THROW(fit_stage1(c), DomainError);
}

TEST(Stage1, AsimovLabDetectors) {
    CountsMatrix const c = asimov({4.1, 0.3}, kLabH, kLabV, 1e9);
    Stage1Result const s = fit_stage1(c);
    EXPECT_NEAR(s.detected_mean_h / (0.012 * 4.1), 1.0, 0.01);
    EXPECT_NEAR(s.detected_mean_v / (0.010 * 4.1), 1.0, 0.01);
    EXPECT_NEAR(s.dark_h / 0.11, 1.0, 0.01);
    EXPECT_NEAR(s.dark_v / 0.14, 1.0, 0.01);
    EXPECT_NEAR(s.xtalk_h / 0.12, 1.0, 0.02);
    EXPECT_NEAR(s.xtalk_v / 0.11, 1.0, 0.02);
}

TEST(Stage1, ObjectiveMinimumAtTruthOnAsimovData) {
    CountsMatrix const c = asimov({4.1, 0.0}, kLabH, kLabV, 1e9);
    Stage1Result const s = fit_stage1(c);
    FitConfig cfg;
    // The fitted residual cannot exceed the residual of the generating parameters.
    Eigen::MatrixXd const cm = c.counts.cast<double>();
    Eigen::VectorXd const ph = cm.rowwise().sum(), pv = cm.colwise().sum().transpose();
    Eigen::MatrixXd const target = ph * pv.transpose() / static_cast<double>(c.shots);
    Eigen::VectorXd const mh = detail::detected_marginal(0.012 * 4.1, 0.11, 0.12, 40, 40);
    Eigen::VectorXd const mv = detail::detected_marginal(0.010 * 4.1, 0.14, 0.11, 40, 40);
    double const truth = detail::weighted_sse(static_cast<double>(c.shots) * mh * mv.transpose(), target, cfg.weighting);
    EXPECT_LE(s.residual, truth * (1.0 + 1e-6) + 1e-9);
}

// Single-mode detected law by direct convolution, used only for the Fisher bound.
Eigen::VectorXd detected_law(double d, double dark, double eps, int k_max) {
    int const n_src = 400;
    Eigen::VectorXd fired = Eigen::VectorXd::Zero(n_src + 1);
    for (int a = 0; a <= n_src; ++a)
        for (int b = 0; a + b <= n_src && b <= 40; ++b)
            fired(a + b) += std::pow(d / (d + 1), a) / (d + 1) * std::exp(-dark) * std::pow(dark, b) / std::tgamma(b + 1.0);
    Eigen::VectorXd out = Eigen::VectorXd::Zero(k_max + 1);
    for (int j = 0; j <= n_src; ++j)
        for (int x = 0; x <= j && j + x <= k_max; ++x)
            out(j + x) += fired(j) * std::exp(std::lgamma(j + 1.0) - std::lgamma(x + 1.0) - std::lgamma(j - x + 1.0)) *
                          std::pow(eps, x) * std::pow(1 - eps, j - x);
    return out;
}

// Cramer-Rao standard deviations of (d, dark, eps) from `shots` single-mode samples.
Eigen::Vector3d cramer_rao(double d, double dark, double eps, double shots) {
    Eigen::Vector3d const theta(d, dark, eps);
    std::array<Eigen::VectorXd, 3> grad;
    Eigen::VectorXd const p0 = detected_law(d, dark, eps, 80);
    for (int i = 0; i < 3; ++i) {
        Eigen::Vector3d t = theta;
        double const h = 1e-5;
        t(i) += h;
        grad[i] = (detected_law(t(0), t(1), t(2), 80) - p0) / h;
    }
    Eigen::Matrix3d info = Eigen::Matrix3d::Zero();
    for (int k = 0; k <= 80; ++k) {
        if (p0(k) <= 0.0) continue;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) info(i, j) += shots * grad[i](k) * grad[j](k) / p0(k);
    }
    return info.inverse().diagonal().cwiseSqrt();
}

TEST(Stage1, IdealDetectorLimitWithinStatisticalError) {
    SimConfig const sim{{4.1, 1.0}, DetectorParams::ideal(), DetectorParams::ideal(), 1'000'000, 5, 40};
    Stage1Result const s = fit_stage1(simulate(sim, 1));
    Eigen::Vector3d const sigma = cramer_rao(4.1, 0.0, 0.0, 1e6);
    EXPECT_NEAR(s.detected_mean_h, 4.1, 4.0 * sigma(0));
    EXPECT_NEAR(s.detected_mean_v, 4.1, 4.0 * sigma(0));
    EXPECT_LT(s.dark_h, 4.0 * sigma(1));
    EXPECT_LT(s.dark_v, 4.0 * sigma(1));
    EXPECT_LT(s.xtalk_h, 4.0 * sigma(2));
    EXPECT_LT(s.xtalk_v, 4.0 * sigma(2));
}

TEST(Stage1, AsimovIdealDetectors) {
    Stage1Result const s = fit_stage1(asimov({4.1, 0.5}, DetectorParams::ideal(), DetectorParams::ideal(), 1e9));
    EXPECT_NEAR(s.detected_mean_h, 4.1, 0.01);
    EXPECT_NEAR(s.detected_mean_v, 4.1, 0.01);
    EXPECT_LT(s.dark_h + s.dark_v + s.xtalk_h + s.xtalk_v, 0.01);
}

TEST(Stage1, LabDetectorsWithinStatisticalError) {
    DetectorParams const det{0.010, 0.11, 0.12};
    Eigen::Vector3d const sigma = cramer_rao(0.010 * 4.1, 0.11, 0.12, 1e6);
    SimConfig const sim{{4.1, 0.23}, det, det, 1'000'000, 21, 40};
    Stage1Result const s = fit_stage1(simulate(sim, 1));
    for (double d : {s.detected_mean_h, s.detected_mean_v}) EXPECT_NEAR(d, 0.010 * 4.1, 4.0 * sigma(0));
    for (double dk : {s.dark_h, s.dark_v}) EXPECT_NEAR(dk / 0.11, 1.0, 0.15);
    for (double xt : {s.xtalk_h, s.xtalk_v}) EXPECT_NEAR(xt / 0.12, 1.0, 0.15);
}

TEST(Stage1, SharedProductStateAcrossCorrelations) {
    // The marginals do not depend on g, so stage 1 sees the same product state.
    Eigen::Vector3d const sigma = cramer_rao(0.012 * 4.1, 0.11, 0.12, 1e6);
    std::vector<Stage1Result> fits;
    std::uint64_t seed = 700;
    for (double g : {0.06, 0.23, 0.47})
        fits.push_back(fit_stage1(simulate({{4.1, g}, kLabH, kLabV, 1'000'000, seed++, 40}, 1)));
    for (auto const& a : fits)
        for (auto const& b : fits) {
            EXPECT_NEAR(a.detected_mean_h, b.detected_mean_h, 4.0 * std::sqrt(2.0) * sigma(0));
            EXPECT_NEAR(a.dark_h, b.dark_h, 4.0 * std::sqrt(2.0) * sigma(1));
            EXPECT_NEAR(a.xtalk_h, b.xtalk_h, 4.0 * std::sqrt(2.0) * sigma(2));
        }
}

TEST(Stage2, AsimovRecoveryWithKnownMean) {
    for (double g : {0.0, 0.06, 0.23, 0.47, 1.0}) {
        CountsMatrix const c = asimov({4.1, g}, kLabH, kLabV, 1e9);
        FitConfig cfg;
        cfg.mean_photons = 4.1;
        FitResult const f = fit(c, cfg);
        EXPECT_NEAR(f.source.correlation, g, 0.01) << "g=" << g;
        EXPECT_NEAR(f.det_h.efficiency, 0.012, 2e-4);
    }
}

TEST(Stage2, AsimovRecoveryFreeMean) {
    CountsMatrix const c = asimov({4.1, 0.47}, kLabH, kLabV, 1e10);
    FitResult const f = fit(c);
    EXPECT_NEAR(f.source.correlation, 0.47, 0.05);
    EXPECT_NEAR(f.source.mean_photons, 4.1, 1.0);
}

TEST(Stage2, AsimovIdealDetectorsFreeMean) {
    for (double g : {0.0, 0.23, 0.47, 1.0}) {
        FitResult const f = fit(asimov({4.1, g}, DetectorParams::ideal(), DetectorParams::ideal(), 1e9));
        EXPECT_NEAR(f.source.correlation, g, 0.01) << "g=" << g;
        if (g > 0.0) {
            EXPECT_NEAR(f.source.mean_photons, 4.1, 0.05) << "g=" << g;
        }
        EXPECT_GE(f.source.correlation, 0.0);
        EXPECT_LE(f.source.correlation, 1.0);
    }
}

TEST(Stage2, ZeroCorrelationClampsToBoundary) {
    SimConfig const sim{{2.0, 0.0}, DetectorParams{0.6, 0.05, 0.05}, DetectorParams{0.5, 0.05, 0.05},
                        1'000'000, 17, 30};
    FitResult const f = fit(simulate(sim, 1));
    EXPECT_GE(f.source.correlation, 0.0);
    EXPECT_LE(f.source.correlation, 0.03);
}

TEST(Stage2, FittedObjectiveNotAboveTruth) {
    SimConfig const sim{{4.1, 0.47}, kLabH, kLabV, 1'000'000, 3, 40};
    CountsMatrix const c = simulate(sim, 1);
    FitConfig cfg;
    cfg.mean_photons = 4.1;
    Stage1Result const s1 = fit_stage1(c, cfg);
    FitResult const f = fit_stage2(c, s1, cfg);
    detail::JointModel const model(s1, 40, 40);
    auto const parts = model.parts(4.1);
    for (double g : {0.0, 0.2, 0.47, 0.8, 1.0}) {
        double const at_g = detail::weighted_sse(
            static_cast<double>(c.shots) * (g * parts.correlated + (1 - g) * parts.product),
            c.counts.cast<double>(), cfg.weighting);
        EXPECT_LE(f.residual, at_g + 1e-9) << g;
    }
}

TEST(Stage2, StageOneRefitOfFittedModelIsStable) {
    SimConfig const sim{{4.1, 0.47}, kLabH, kLabV, 1'000'000, 4, 40};
    FitResult const f = fit(simulate(sim, 1));
    Stage1Result const again = fit_stage1(asimov(f.source, f.det_h, f.det_v, 1e9));
    EXPECT_NEAR(again.detected_mean_h / f.stage1.detected_mean_h, 1.0, 0.01);
    EXPECT_NEAR(again.detected_mean_v / f.stage1.detected_mean_v, 1.0, 0.01);
}

TEST(Stage2, MedianErrorShrinksWithShots) {
    auto median_error = [](std::int64_t shots) {
        std::vector<double> err;
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            SimConfig const sim{{4.1, 0.47}, kLabH, kLabV, shots, 5000 + seed, 40};
            FitResult f;
            try {
                f = fit(simulate(sim, 1));
            } catch (NotConverged<FitResult> const& e) {
                f = e.best();
            }
            err.push_back(std::abs(f.source.correlation - 0.47));
        }
        std::sort(err.begin(), err.end());
        return 0.5 * (err[4] + err[5]);
    };
    double const coarse = median_error(10'000);
    double const fine = median_error(1'000'000);
    EXPECT_LT(fine, coarse);
    std::printf("median |g - 0.47|: 1e4 shots %.4f, 1e6 shots %.4f\n", coarse, fine);
}

TEST(Stage2, MeanBelowDetectedMeanIsDomainError) {
    CountsMatrix const c = asimov({4.1, 0.3}, kLabH, kLabV, 1e8);
    FitConfig cfg;
    cfg.mean_photons = 0.01;
    EXPECT_THROW(fit(c, cfg), DomainError);
}

TEST(Stage2, NotConvergedCarriesBestSoFar) {
    CountsMatrix const c = asimov({4.1, 0.3}, kLabH, kLabV, 1e8);
    FitConfig cfg;
    cfg.max_iterations = 5;
    try {
        (void)fit(c, cfg);
        FAIL() << "expected a convergence failure";
    } catch (NotConverged<Stage1Result> const& e) {
        EXPECT_GT(e.best().detected_mean_h, 0.0);
    }
}

TEST(Reconstruct, Endpoints) {
    FitResult f;
    f.source = {4.1, 1.0};
    JointDistribution const diag = reconstruct(f, 30);
    EXPECT_EQ(diag.probs().sum(), diag.probs().diagonal().sum());
    f.source = {4.1, 0.0};
    EXPECT_LT(product_distance(singular_spectrum(reconstruct(f, 30))), 1e-12);
}

TEST(Bootstrap, IdenticalStreamsGiveZeroError) {
    SimConfig const sim{{4.1, 0.3}, kLabH, kLabV, 200000, 8, 40};
    CountsMatrix const c = simulate(sim, 1);
    FitConfig cfg;
    cfg.mean_photons = 4.1;
    BootstrapResult const b = bootstrap_streams(c, {7, 7}, 1, cfg);
    EXPECT_EQ(b.g_error, 0.0);
    EXPECT_EQ(b.distance_error, 0.0);
}

TEST(Bootstrap, NeedsTwoResamples) {
    CountsMatrix const c = asimov({4.1, 0.3}, kLabH, kLabV, 1e5);
    EXPECT_THROW(bootstrap(c, 1, 0), DomainError);
    EXPECT_THROW(bootstrap(c, 0, 0), DomainError);
}

TEST(Bootstrap, DeterministicAcrossWorkers) {
    SimConfig const sim{{4.1, 0.3}, kLabH, kLabV, 100000, 8, 40};
    CountsMatrix const c = simulate(sim, 1);
    FitConfig cfg;
    cfg.mean_photons = 4.1;
    BootstrapOptions one{true, 1}, many{true, 4};
    BootstrapResult const a = bootstrap(c, 6, 42, cfg, one);
    BootstrapResult const b = bootstrap(c, 6, 42, cfg, many);
    EXPECT_EQ(a.g_samples, b.g_samples);
    EXPECT_EQ(a.distance_samples, b.distance_samples);
    EXPECT_GT(a.distance_error, 0.0);
}

TEST(Bootstrap, PoissonResampleKeepsTotalsClose) {
    CountsMatrix const c = asimov({4.1, 0.3}, kLabH, kLabV, 1e6);
    Rng rng = make_stream(3, 0);
    CountsMatrix const r = poisson_resample(c, rng);
    r.validate();
    EXPECT_NEAR(static_cast<double>(r.shots), 1e6, 5.0 * 1e3);
}

}  // namespace
}  // namespace pnrstat
