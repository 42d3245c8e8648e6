// Copyright 2026 The pnrstat Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "pnrstat/measures.hpp"

namespace pnrstat {
namespace {

DetectorParams const kLabH{0.012, 0.11, 0.12};
DetectorParams const kLabV{0.010, 0.14, 0.11};

JointDistribution uniform_diagonal(int n) {
    return {Eigen::MatrixXd(Eigen::VectorXd::Constant(n, 1.0 / n).asDiagonal()), 0.0};
}

// Dominant singular triplet by power iteration on A^T A, independent of any SVD library.
struct Triplet {
    double sigma;
    Eigen::VectorXd u, v;
};

Triplet power_iteration(Eigen::MatrixXd const& a) {
    Eigen::VectorXd v = Eigen::VectorXd::Ones(a.cols()).normalized();
    for (int i = 0; i < 5000; ++i) {
        Eigen::VectorXd next = a.transpose() * (a * v);
        next.normalize();
        if ((next - v).norm() < 1e-15) {
            v = next;
            break;
        }
        v = next;
    }
    Eigen::VectorXd u = a * v;
    double const sigma = u.norm();
    return {sigma, u / sigma, v};
}

TEST(RatioMatrix, ProductIsOneEverywhere) {
    for (int n : {5, 40}) {
        RatioMatrix const r = ratio_matrix(product_joint(4.1, n));
        for (int a = 0; a <= n; ++a)
            for (int b = 0; b <= n; ++b) {
                ASSERT_TRUE(r.at(a, b).has_value());
                EXPECT_NEAR(*r.at(a, b), 1.0, 1e-12);
            }
    }
}

TEST(RatioMatrix, PdcDiagonalAndOffDiagonal) {
    RatioMatrix const r = ratio_matrix(pdc_joint(1.0, 60));
    EXPECT_NEAR(*r.at(1, 1), 4.0, 1e-12);
    EXPECT_EQ(*r.at(1, 2), 0.0);
    EXPECT_EQ(*r.at(3, 0), 0.0);
}

TEST(RatioMatrix, UndefinedWhereMarginalVanishes) {
    RatioMatrix const r = ratio_matrix(JointDistribution::point_mass(3, 1, 2));
    EXPECT_TRUE(r.at(1, 2).has_value());
    EXPECT_FALSE(r.at(0, 2).has_value());
    EXPECT_FALSE(r.at(1, 1).has_value());
    EXPECT_NEAR(mean_interior_ratio(r), 1.0, 1e-15);
}

TEST(MeanInteriorRatio, ProductIsExactlyOne) {
    EXPECT_NEAR(mean_interior_ratio(ratio_matrix(product_joint(4.1, 40))), 1.0, 1e-12);
    JointDistribution const out = apply_two_mode(product_joint(4.1, 40), kLabH, kLabV);
    EXPECT_NEAR(mean_interior_ratio(ratio_matrix(out)), 1.0, 1e-9);
}

TEST(MeanInteriorRatio, NoInteriorCellsIsDomainError) {
    EXPECT_THROW(mean_interior_ratio(ratio_matrix(JointDistribution::point_mass(3, 0, 0))), DomainError);
}

TEST(MeanInteriorRatio, NondecreasingInCorrelation) {
    double prev = 0.0;
    for (int i = 0; i <= 10; ++i) {
        double const g = 0.1 * i;
        JointDistribution const out = apply_two_mode(mixture_joint({4.1, g}, 40), kLabH, kLabV);
        double const r = mean_interior_ratio(ratio_matrix(out));
        EXPECT_GE(r, prev - 1e-12) << "g=" << g;
        prev = r;
    }
}

TEST(WeightedInteriorRatio, ProductAndPdc) {
    JointDistribution const prod = product_joint(2.0, 30);
    EXPECT_NEAR(weighted_interior_ratio(ratio_matrix(prod), prod), 1.0, 1e-12);
    JointDistribution const pdc = pdc_joint(1.0, 60);
    EXPECT_GT(weighted_interior_ratio(ratio_matrix(pdc), pdc), 1.0);
}

TEST(SingularSpectrum, RankOne) {
    SingularSpectrum const s = singular_spectrum(product_joint(4.1, 30));
    EXPECT_NEAR(s.values[0], 1.0, 1e-12);
    for (std::size_t i = 1; i < s.values.size(); ++i) EXPECT_LT(s.values[i], 1e-12);
    EXPECT_LT(product_distance(s), 1e-12);
}

TEST(SingularSpectrum, UniformDiagonal) {
    for (int n : {2, 5, 11}) {
        SingularSpectrum const s = singular_spectrum(uniform_diagonal(n));
        ASSERT_EQ(static_cast<int>(s.values.size()), n);
        for (double v : s.values) EXPECT_NEAR(v, 1.0 / std::sqrt(n), 1e-12);
        EXPECT_NEAR(product_distance(s), std::sqrt((n - 1.0) / n), 1e-12);
    }
}

TEST(SingularSpectrum, ScaleAndTransposeInvariant) {
    JointDistribution const j = apply_two_mode(mixture_joint({4.1, 0.5}, 30), kLabH, kLabV);
    SingularSpectrum const a = singular_spectrum(j.probs());
    SingularSpectrum const b = singular_spectrum(Eigen::MatrixXd(7.5 * j.probs().transpose()));
    ASSERT_EQ(a.values.size(), b.values.size());
    for (std::size_t i = 0; i < a.values.size(); ++i) EXPECT_NEAR(a.values[i], b.values[i], 1e-12);
    double sq = 0.0;
    for (double v : a.values) sq += v * v;
    EXPECT_NEAR(sq, 1.0, 1e-12);
    for (std::size_t i = 1; i < a.values.size(); ++i) EXPECT_LE(a.values[i], a.values[i - 1]);
}

TEST(SingularSpectrum, ZeroMatrixIsDomainError) {
    EXPECT_THROW(singular_spectrum(Eigen::MatrixXd::Zero(3, 3)), DomainError);
}

TEST(ClosestProduct, ProductIsFixedPoint) {
    JointDistribution const p = product_joint(4.1, 30);
    ClosestProduct const c = closest_product(p);
    EXPECT_LT((c.matrix - p.probs()).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_FALSE(c.has_negative_entries && (c.matrix.array() < -1e-15).any());
}

TEST(ClosestProduct, EckartYoungResidualEqualsDistance) {
    for (double g : {0.0, 0.2, 0.7, 1.0}) {
        JointDistribution const j = apply_two_mode(mixture_joint({4.1, g}, 30), kLabH, kLabV);
        double const resid = (j.probs() - closest_product(j).matrix).norm() / j.probs().norm();
        EXPECT_NEAR(resid, product_distance(singular_spectrum(j)), 1e-10) << "g=" << g;
    }
}

TEST(ClosestProduct, PdcAgainstPowerIteration) {
    JointDistribution const pdc = pdc_joint(1.0, 20);
    Triplet const t = power_iteration(pdc.probs());
    Eigen::MatrixXd const oracle = t.sigma * t.u * t.v.transpose();
    EXPECT_LT((closest_product(pdc).matrix - oracle).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(ClosestProduct, NoisyMatrixAgainstPowerIteration) {
    JointDistribution const j = apply_two_mode(mixture_joint({4.1, 0.47}, 30), kLabH, kLabV);
    Triplet const t = power_iteration(j.probs());
    Eigen::MatrixXd const oracle = t.sigma * t.u * t.v.transpose();
    EXPECT_LT((closest_product(j).matrix - oracle).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(ProductDistance, GrowsWithCorrelation) {
    double const low = product_distance(
        singular_spectrum(apply_two_mode(mixture_joint({4.1, 0.05}, 40), kLabH, kLabV)));
    double const high = product_distance(
        singular_spectrum(apply_two_mode(mixture_joint({4.1, 1.0}, 40), kLabH, kLabV)));
    EXPECT_GT(high, 10.0 * low);
    double prev = -1.0;
    for (int i = 0; i <= 10; ++i) {
        double const d = product_distance(
            singular_spectrum(apply_two_mode(mixture_joint({4.1, 0.1 * i}, 40), kLabH, kLabV)));
        EXPECT_GT(d, prev);
        prev = d;
    }
}

TEST(LeeCriterion, ThermalProductAndPdc) {
    LeeResult const prod = lee_criterion(moments(product_joint(1.0, 200)));
    EXPECT_FALSE(prod.nonclassical);
    EXPECT_NEAR(prod.witness, -3.0, 1e-9);
    LeeResult const pdc = lee_criterion(moments(pdc_joint(1.0, 200)));
    EXPECT_TRUE(pdc.nonclassical);
    EXPECT_NEAR(pdc.witness, 5.0, 1e-9);
}

TEST(LeeCriterion, ThresholdAtMeanOverMeanPlusOne) {
    for (double m : {0.5, 1.0, 4.1}) {
        int const n = thermal_n_max(m, 1e-17) + 20;
        double const gstar = m / (m + 1.0);
        EXPECT_FALSE(lee_criterion(moments(mixture_joint({m, gstar - 1e-6}, n))).nonclassical) << m;
        EXPECT_TRUE(lee_criterion(moments(mixture_joint({m, gstar + 1e-6}, n))).nonclassical) << m;
        EXPECT_LE(lee_criterion(moments(mixture_joint({m, 0.0}, n))).witness, 0.0);
    }
}

TEST(HeraldedEfficiency, PerfectPdcPerfectDetector) {
    double const gamma = heralded_efficiency({4.1, 1.0}, DetectorParams::ideal(), DetectorParams::ideal(), Mode::H);
    EXPECT_NEAR(gamma, 1.0, 1e-4);
}

TEST(HeraldedEfficiency, ProportionalToCorrelationAndEfficiency) {
    double const gamma =
        heralded_efficiency({4.1, 0.5}, DetectorParams::ideal(), DetectorParams{0.2, 0.0, 0.0}, Mode::H);
    EXPECT_NEAR(gamma, 0.1, 1e-4);
    double const v_herald =
        heralded_efficiency({4.1, 0.5}, DetectorParams{0.3, 0.0, 0.0}, DetectorParams::ideal(), Mode::V);
    EXPECT_NEAR(v_herald, 0.15, 1.5e-4);
}

TEST(HeraldedEfficiency, AccidentalsVanishLinearly) {
    DetectorParams const ideal = DetectorParams::ideal();
    double const a = heralded_ratio_at_probe({1.0, 0.0}, ideal, ideal, Mode::H, {1e-3, 12});
    double const b = heralded_ratio_at_probe({1.0, 0.0}, ideal, ideal, Mode::H, {1e-4, 12});
    EXPECT_GT(a, 0.0);
    EXPECT_NEAR(a / b, 10.0, 0.05);
    EXPECT_LT(heralded_efficiency({1.0, 0.0}, ideal, ideal, Mode::H), 1e-7);
}

TEST(HeraldedEfficiency, IgnoresDarkCounts) {
    DetectorParams const noisy{0.4, 0.3, 0.0};
    DetectorParams const clean{0.4, 0.0, 0.0};
    EXPECT_EQ(heralded_efficiency({1.0, 0.6}, noisy, noisy, Mode::H),
              heralded_efficiency({1.0, 0.6}, clean, clean, Mode::H));
}

TEST(CorrelationReport, ProductMatrix) {
    CorrelationReport const r = correlation_report(product_joint(1.0, 30));
    EXPECT_NEAR(r.mean_interior_ratio, 1.0, 1e-12);
    EXPECT_LT(r.product_distance, 1e-12);
    EXPECT_FALSE(r.lee_nonclassical);
}

}  // namespace
}  // namespace pnrstat
