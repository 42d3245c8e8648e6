// Copyright 2026 The pnrstat Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Per-mode detector transfer matrices and the two-mode channel
//
//     P_measured = M_ct * M_dk * M_loss * P
//
// applied independently to each polarization mode. All count indices are
// inclusive maxima: a matrix built for (n_in, n_out) has shape
// (n_out + 1) x (n_in + 1). Probability pushed past n_out is recorded per
// input column as overflow rather than clamped into the top bin.

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "distributions.hpp"
#include "errors.hpp"

namespace pnrstat {

/// Per-mode imperfections: efficiency eta, mean dark counts Delta, crosstalk eps.
struct DetectorParams {
    double efficiency = 1.0;
    double dark_mean = 0.0;
    double crosstalk = 0.0;

    void validate() const {
        detail::require_domain(efficiency > 0.0 && efficiency <= 1.0,
                               "efficiency must lie in (0, 1]");
        detail::require_domain(std::isfinite(dark_mean) && dark_mean >= 0.0,
                               "dark_mean must be >= 0");
        detail::require_domain(crosstalk >= 0.0 && crosstalk < 1.0,
                               "crosstalk must lie in [0, 1)");
    }

    static DetectorParams ideal() { return {}; }

    friend bool operator==(DetectorParams const&, DetectorParams const&) = default;
};

/// Column-stochastic transfer matrix, entry(m, n) = P(output m | input n).
class ChannelMatrix {
  public:
    ChannelMatrix(Eigen::MatrixXd entries, Eigen::VectorXd overflow)
        : entries_(std::move(entries)), overflow_(std::move(overflow)) {
        detail::require_contract(overflow_.size() == entries_.cols(),
                                 "overflow must have one entry per input column");
    }

    static ChannelMatrix identity(int n_max) {
        return {Eigen::MatrixXd::Identity(n_max + 1, n_max + 1), Eigen::VectorXd::Zero(n_max + 1)};
    }

    [[nodiscard]] int in_max() const { return static_cast<int>(entries_.cols()) - 1; }
    [[nodiscard]] int out_max() const { return static_cast<int>(entries_.rows()) - 1; }
    [[nodiscard]] Eigen::MatrixXd const& entries() const { return entries_; }
    /// Mass per input column that landed beyond out_max.
    [[nodiscard]] Eigen::VectorXd const& overflow() const { return overflow_; }
    [[nodiscard]] double operator()(int m, int n) const { return entries_(m, n); }
    [[nodiscard]] Eigen::VectorXd column_sums() const { return entries_.colwise().sum().transpose(); }

    /// Channel composition: (*this) applied after `first`.
    [[nodiscard]] ChannelMatrix then_after(ChannelMatrix const& first) const {
        detail::require_contract(in_max() == first.out_max(), "channel dimensions do not chain");
        // Mass lost by `first` stays lost; mass lost here is weighted by what reached us.
        Eigen::VectorXd lost = first.overflow_ + first.entries_.transpose() * overflow_;
        return {entries_ * first.entries_, std::move(lost)};
    }

  private:
    Eigen::MatrixXd entries_;
    Eigen::VectorXd overflow_;
};

inline ChannelMatrix operator*(ChannelMatrix const& second, ChannelMatrix const& first) {
    return second.then_after(first);
}

namespace detail {

inline double binomial_pmf(int k, int n, double p) {
    if (k < 0 || k > n) return 0.0;
    if (p == 0.0) return k == 0 ? 1.0 : 0.0;
    if (p == 1.0) return k == n ? 1.0 : 0.0;
    double const log_c = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
    return std::exp(log_c + k * std::log(p) + (n - k) * std::log1p(-p));
}

inline double poisson_pmf(int k, double mean) {
    if (k < 0) return 0.0;
    if (mean == 0.0) return k == 0 ? 1.0 : 0.0;
    return std::exp(-mean + k * std::log(mean) - std::lgamma(k + 1.0));
}

/// P(K > k) for K ~ Poisson(mean), summed upward to avoid 1 - cdf cancellation.
inline double poisson_upper_tail(int k, double mean) {
    if (mean == 0.0) return 0.0;
    if (k < 0) return 1.0;
    double cdf_below = 0.0;
    if (k + 1 < mean) {
        // Tail is the bulk here; the complement is accurate enough.
        for (int j = 0; j <= k; ++j) cdf_below += poisson_pmf(j, mean);
        return std::max(0.0, 1.0 - cdf_below);
    }
    double term = poisson_pmf(k + 1, mean);
    double sum = 0.0;
    for (int j = k + 1; term > 0.0; ++j) {
        sum += term;
        term *= mean / (j + 1.0);
        if (term < sum * 1e-18) break;
    }
    return sum;
}

/// Builds a matrix whose column n is the law of n + K with K ~ `pmf(k; n)`.
template <class Pmf, class Tail>
ChannelMatrix additive_channel(int n_in, int n_out, Pmf pmf, Tail tail) {
    require_contract(n_in >= 0 && n_out >= 0, "channel dimensions must be >= 0");
    Eigen::MatrixXd e = Eigen::MatrixXd::Zero(n_out + 1, n_in + 1);
    Eigen::VectorXd over = Eigen::VectorXd::Zero(n_in + 1);
    for (int n = 0; n <= n_in; ++n) {
        for (int m = n; m <= n_out; ++m) e(m, n) = pmf(m - n, n);
        over(n) = tail(n_out - n, n);  // P(K > n_out - n)
    }
    return {std::move(e), std::move(over)};
}

}  // namespace detail

/// Binomial thinning: each photon survives with probability eta.
inline ChannelMatrix loss_matrix(double efficiency, int n_in, int n_out) {
    detail::require_domain(efficiency > 0.0 && efficiency <= 1.0, "efficiency must lie in (0, 1]");
    detail::require_contract(n_in >= 0 && n_out >= 0, "channel dimensions must be >= 0");
    Eigen::MatrixXd e = Eigen::MatrixXd::Zero(n_out + 1, n_in + 1);
    Eigen::VectorXd over = Eigen::VectorXd::Zero(n_in + 1);
    for (int n = 0; n <= n_in; ++n) {
        for (int m = 0; m <= std::min(n, n_out); ++m) e(m, n) = detail::binomial_pmf(m, n, efficiency);
        for (int m = n_out + 1; m <= n; ++m) over(n) += detail::binomial_pmf(m, n, efficiency);
    }
    return {std::move(e), std::move(over)};
}

/// Additive Poisson dark counts with mean Delta, independent of the input.
inline ChannelMatrix dark_matrix(double dark_mean, int n_in, int n_out) {
    detail::require_domain(std::isfinite(dark_mean) && dark_mean >= 0.0, "dark_mean must be >= 0");
    return detail::additive_channel(
        n_in, n_out, [&](int k, int) { return detail::poisson_pmf(k, dark_mean); },
        [&](int k, int) { return detail::poisson_upper_tail(k, dark_mean); });
}

/// One-generation crosstalk: each fired cell adds at most one extra count with probability eps.
inline ChannelMatrix crosstalk_matrix(double crosstalk, int n_in, int n_out) {
    detail::require_domain(crosstalk >= 0.0 && crosstalk < 1.0, "crosstalk must lie in [0, 1)");
    return detail::additive_channel(
        n_in, n_out, [&](int k, int n) { return detail::binomial_pmf(k, n, crosstalk); },
        [&](int k, int n) {
            double s = 0.0;
            for (int j = std::max(k + 1, 0); j <= n; ++j) s += detail::binomial_pmf(j, n, crosstalk);
            return s;
        });
}

/// Loss, then dark counts, then crosstalk (darks also emit crosstalk).
inline ChannelMatrix compose_channel(DetectorParams const& params, int n_in, int n_out) {
    params.validate();
    // Darks and crosstalk only add counts, so mass beyond n_out after loss is lost for good.
    ChannelMatrix const loss = loss_matrix(params.efficiency, n_in, n_out);
    ChannelMatrix const dark = dark_matrix(params.dark_mean, n_out, n_out);
    ChannelMatrix const xtalk = crosstalk_matrix(params.crosstalk, n_out, n_out);
    return xtalk * dark * loss;
}

/// C_h * P * C_v^T, i.e. the tensor-product channel without forming the Kronecker matrix.
inline JointDistribution apply_two_mode(JointDistribution const& joint, ChannelMatrix const& channel_h,
                                        ChannelMatrix const& channel_v) {
    detail::require_contract(channel_h.in_max() == joint.n_max() && channel_v.in_max() == joint.n_max(),
                             "channel input dimension does not match the joint distribution");
    detail::require_contract(channel_h.out_max() == channel_v.out_max(),
                             "both mode channels must share the output dimension");
    auto const& p = joint.probs();
    Eigen::MatrixXd measured = channel_h.entries() * p * channel_v.entries().transpose();
    auto const& a = channel_h.overflow();
    auto const& b = channel_v.overflow();
    // 1 - (1 - a)(1 - b) = a + b - ab, summed against P
    double const lost = a.dot(p.rowwise().sum()) + b.dot(p.colwise().sum().transpose()) - a.dot(p * b);
    return {std::move(measured), joint.tail_mass() + std::max(0.0, lost)};
}

inline JointDistribution apply_two_mode(JointDistribution const& joint, DetectorParams const& params_h,
                                        DetectorParams const& params_v, int n_out) {
    return apply_two_mode(joint, compose_channel(params_h, joint.n_max(), n_out),
                          compose_channel(params_v, joint.n_max(), n_out));
}

inline JointDistribution apply_two_mode(JointDistribution const& joint, DetectorParams const& params_h,
                                        DetectorParams const& params_v) {
    return apply_two_mode(joint, params_h, params_v, joint.n_max());
}

}  // namespace pnrstat
