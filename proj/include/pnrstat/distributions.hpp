// Copyright 2026 The pnrstat Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Ideal (pre-detector) two-mode photon-number distributions of a PDC source:
// the perfectly correlated diagonal law, the thermal product law, and their
// probability-level mixture weighted by the degree of correlation g.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "errors.hpp"

namespace pnrstat {

enum class Mode { H, V };

/// Physical two-mode source: mean photons per mode and degree of correlation.
struct SourceParams {
    double mean_photons = 0.0;
    double correlation = 0.0;

    void validate() const {
        detail::require_domain(std::isfinite(mean_photons) && mean_photons >= 0.0,
                               "mean_photons must be >= 0");
        detail::require_domain(correlation >= 0.0 && correlation <= 1.0,
                               "correlation must lie in [0, 1]");
    }

    friend bool operator==(SourceParams const&, SourceParams const&) = default;
};

/// Single-mode photon-number law truncated at n_max (inclusive).
struct Marginal {
    Eigen::VectorXd probs;
    double tail_mass = 0.0;

    [[nodiscard]] int n_max() const { return static_cast<int>(probs.size()) - 1; }
    [[nodiscard]] double operator[](int n) const { return probs(n); }
};

/// Truncated joint probability matrix P(n_h, n_v); rows are n_h.
///
/// Probability beyond the truncation is recorded in tail_mass and never
/// redistributed into the stored cells.
class JointDistribution {
  public:
    JointDistribution() : probs_(Eigen::MatrixXd::Zero(1, 1)) {}

    JointDistribution(Eigen::MatrixXd probs, double tail_mass)
        : probs_(std::move(probs)), tail_mass_(tail_mass) {
        detail::require_contract(probs_.rows() == probs_.cols() && probs_.rows() >= 1,
                                 "joint distribution must be a non-empty square matrix");
        detail::require_domain((probs_.array() >= 0.0).all(),
                               "joint distribution entries must be nonnegative");
        detail::require_domain(tail_mass_ >= 0.0, "tail mass must be nonnegative");
    }

    /// Unit mass at (n_h, n_v).
    static JointDistribution point_mass(int n_max, int n_h, int n_v) {
        detail::require_contract(n_h >= 0 && n_v >= 0 && n_h <= n_max && n_v <= n_max,
                                 "point mass outside the truncation window");
        Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n_max + 1, n_max + 1);
        p(n_h, n_v) = 1.0;
        return {std::move(p), 0.0};
    }

    [[nodiscard]] int n_max() const { return static_cast<int>(probs_.rows()) - 1; }
    [[nodiscard]] Eigen::MatrixXd const& probs() const { return probs_; }
    [[nodiscard]] double tail_mass() const { return tail_mass_; }
    [[nodiscard]] double operator()(int n_h, int n_v) const { return probs_(n_h, n_v); }
    [[nodiscard]] double total() const { return probs_.sum(); }

  private:
    Eigen::MatrixXd probs_;
    double tail_mass_ = 0.0;
};

/// Expectations over the truncated matrix; inputs to the Lee witness.
struct Moments {
    double mean_h = 0.0;
    double mean_v = 0.0;
    double cross = 0.0;    // <n_h n_v>
    double fact2_h = 0.0;  // <n_h (n_h - 1)>
    double fact2_v = 0.0;
};

namespace detail {

inline void check_mean(double mean) {
    require_domain(std::isfinite(mean) && mean >= 0.0, "mean photon number must be >= 0");
}

inline void check_n_max(int n_max) { require_contract(n_max >= 0, "n_max must be >= 0"); }

}  // namespace detail

/// Thermal (geometric) law P(n) = (1/(m+1)) (m/(m+1))^n.
inline Marginal thermal_pmf(double mean, int n_max) {
    detail::check_mean(mean);
    detail::check_n_max(n_max);
    double const ratio = mean / (mean + 1.0);
    Marginal out;
    out.probs.resize(n_max + 1);
    double p = 1.0 / (mean + 1.0);
    for (int n = 0; n <= n_max; ++n) {
        out.probs(n) = p;
        p *= ratio;
    }
    out.tail_mass = std::pow(ratio, n_max + 1);
    return out;
}

/// Smallest truncation whose thermal tail is below tol.
inline int thermal_n_max(double mean, double tol) {
    detail::check_mean(mean);
    detail::require_domain(tol > 0.0 && tol < 1.0, "tolerance must lie in (0, 1)");
    if (mean == 0.0) return 0;
    double const ratio = mean / (mean + 1.0);
    // ratio^(n_max + 1) < tol
    return std::max(0, static_cast<int>(std::floor(std::log(tol) / std::log(ratio))));
}

/// Perfectly correlated PDC law: thermal weights on the diagonal, exact zeros elsewhere.
inline JointDistribution pdc_joint(double mean, int n_max) {
    Marginal const t = thermal_pmf(mean, n_max);
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n_max + 1, n_max + 1);
    p.diagonal() = t.probs;
    return {std::move(p), t.tail_mass};
}

/// Product of two independent thermal modes with equal mean.
inline JointDistribution product_joint(double mean, int n_max) {
    Marginal const t = thermal_pmf(mean, n_max);
    Eigen::MatrixXd p = t.probs * t.probs.transpose();
    // 1 - (1 - tail)^2 without cancellation
    return {std::move(p), t.tail_mass * (2.0 - t.tail_mass)};
}

/// g * pdc_joint + (1 - g) * product_joint, entrywise.
inline JointDistribution mixture_joint(SourceParams const& params, int n_max) {
    params.validate();
    JointDistribution const pdc = pdc_joint(params.mean_photons, n_max);
    JointDistribution const prd = product_joint(params.mean_photons, n_max);
    double const g = params.correlation;
    Eigen::MatrixXd p = g * pdc.probs() + (1.0 - g) * prd.probs();
    return {std::move(p), g * pdc.tail_mass() + (1.0 - g) * prd.tail_mass()};
}

/// Row (H) or column (V) sums. The tail carries the joint tail.
inline Marginal marginal(JointDistribution const& joint, Mode mode) {
    Marginal out;
    out.probs = mode == Mode::H ? Eigen::VectorXd(joint.probs().rowwise().sum())
                                : Eigen::VectorXd(joint.probs().colwise().sum().transpose());
    out.tail_mass = joint.tail_mass();
    return out;
}

inline Moments moments(JointDistribution const& joint) {
    Moments m;
    auto const& p = joint.probs();
    int const size = static_cast<int>(p.rows());
    for (int nh = 0; nh < size; ++nh) {
        for (int nv = 0; nv < size; ++nv) {
            double const w = p(nh, nv);
            if (w == 0.0) continue;
            m.mean_h += w * nh;
            m.mean_v += w * nv;
            m.cross += w * nh * nv;
            m.fact2_h += w * nh * (nh - 1.0);
            m.fact2_v += w * nv * (nv - 1.0);
        }
    }
    return m;
}

/// Total variation distance; the two tails count as one extra cell.
inline double total_variation(JointDistribution const& a, JointDistribution const& b) {
    detail::require_contract(a.n_max() == b.n_max(), "total variation needs equal truncation");
    return 0.5 * ((a.probs() - b.probs()).cwiseAbs().sum() + std::abs(a.tail_mass() - b.tail_mass()));
}

}  // namespace pnrstat
