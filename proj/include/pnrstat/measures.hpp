// Copyright 2026 The pnrstat Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Correlation measures computed directly from a (measured or modeled) joint
// photon-number matrix: the joint-to-product ratio R, the singular spectrum
// and distance to the closest product state, the two-mode Lee witness, and
// the heralded efficiency of the forward model.

#include <algorithm>
#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "detector_channel.hpp"
#include "distributions.hpp"
#include "errors.hpp"

namespace pnrstat {

/// R(n_h, n_v) = P(n_h, n_v) / (P(n_h) P(n_v)); cells with a zero marginal are undefined.
struct RatioMatrix {
    Eigen::MatrixXd values;
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> defined;

    [[nodiscard]] int n_max() const { return static_cast<int>(values.rows()) - 1; }
    [[nodiscard]] std::optional<double> at(int n_h, int n_v) const {
        if (!defined(n_h, n_v)) return std::nullopt;
        return values(n_h, n_v);
    }
};

/// Singular values normalized to unit sum of squares, nonincreasing.
struct SingularSpectrum {
    std::vector<double> values;
};

struct LeeResult {
    bool nonclassical = false;
    double witness = 0.0;
};

/// Best rank-1 Frobenius approximation; entries are not clipped.
struct ClosestProduct {
    Eigen::MatrixXd matrix;
    bool has_negative_entries = false;
};

struct CorrelationReport {
    double mean_interior_ratio = 0.0;
    double product_distance = 0.0;
    /// Coincidence-to-singles ratio P(>=1, >=1) / P(>=1 in H) of the matrix itself.
    double heralded_efficiency = 0.0;
    bool lee_nonclassical = false;
    double lee_witness = 0.0;
    SingularSpectrum spectrum;
};

/// R is computed on the matrix normalized to its in-window mass, so a
/// truncated product matrix still gives R = 1.
inline RatioMatrix ratio_matrix(JointDistribution const& joint) {
    auto const& p = joint.probs();
    double const total = p.sum();
    Eigen::VectorXd const ph = p.rowwise().sum();
    Eigen::VectorXd const pv = p.colwise().sum().transpose();
    RatioMatrix r;
    r.values = Eigen::MatrixXd::Zero(p.rows(), p.cols());
    r.defined.setConstant(p.rows(), p.cols(), false);
    if (total <= 0.0) return r;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        for (Eigen::Index j = 0; j < p.cols(); ++j) {
            double const denom = ph(i) * pv(j);
            if (denom > 0.0) {
                r.values(i, j) = p(i, j) * total / denom;
                r.defined(i, j) = true;
            }
        }
    }
    return r;
}

/// Unweighted mean of R over defined cells with n_h >= 1 and n_v >= 1.
inline double mean_interior_ratio(RatioMatrix const& r) {
    double sum = 0.0;
    long count = 0;
    for (Eigen::Index i = 1; i < r.values.rows(); ++i) {
        for (Eigen::Index j = 1; j < r.values.cols(); ++j) {
            if (!r.defined(i, j)) continue;
            sum += r.values(i, j);
            ++count;
        }
    }
    detail::require_domain(count > 0, "no defined interior ratio cells");
    return sum / static_cast<double>(count);
}

/// Probability-weighted variant of mean_interior_ratio.
inline double weighted_interior_ratio(RatioMatrix const& r, JointDistribution const& joint) {
    detail::require_contract(r.n_max() == joint.n_max(), "ratio matrix and joint differ in size");
    double sum = 0.0;
    double weight = 0.0;
    for (Eigen::Index i = 1; i < r.values.rows(); ++i) {
        for (Eigen::Index j = 1; j < r.values.cols(); ++j) {
            if (!r.defined(i, j)) continue;
            sum += joint(i, j) * r.values(i, j);
            weight += joint(i, j);
        }
    }
    detail::require_domain(weight > 0.0, "no interior probability mass");
    return sum / weight;
}

inline SingularSpectrum singular_spectrum(Eigen::MatrixXd const& m) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    Eigen::VectorXd s = svd.singularValues();
    double const norm = s.norm();
    detail::require_domain(norm > 0.0, "singular spectrum of a zero matrix");
    s /= norm;
    return {std::vector<double>(s.data(), s.data() + s.size())};
}

inline SingularSpectrum singular_spectrum(JointDistribution const& joint) {
    return singular_spectrum(joint.probs());
}

/// sqrt(s_2^2 + ... + s_n^2); summed directly rather than as sqrt(1 - s_1^2).
inline double product_distance(SingularSpectrum const& s) {
    double acc = 0.0;
    for (std::size_t i = 1; i < s.values.size(); ++i) acc += s.values[i] * s.values[i];
    return std::sqrt(acc);
}

inline ClosestProduct closest_product(JointDistribution const& joint) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(joint.probs(), Eigen::ComputeFullU | Eigen::ComputeFullV);
    ClosestProduct out;
    out.matrix = svd.singularValues()(0) * svd.matrixU().col(0) * svd.matrixV().col(0).transpose();
    out.has_negative_entries = (out.matrix.array() < 0.0).any();
    return out;
}

/// Cauchy-Schwarz form on normally ordered moments:
/// nonclassical iff <n_h n_v>^2 > <n_h(n_h-1)> <n_v(n_v-1)>.
inline LeeResult lee_criterion(Moments const& m) {
    double const w = m.cross * m.cross - m.fact2_h * m.fact2_v;
    return {w > 0.0, w};
}

struct HeraldConfig {
    double probe_mean = 1e-4;
    int n_max = 12;
};

namespace detail {

inline double coincidence_to_singles(Eigen::MatrixXd const& p, Mode herald) {
    double const both = p.bottomRightCorner(p.rows() - 1, p.cols() - 1).sum();
    double const singles = herald == Mode::H ? p.bottomRows(p.rows() - 1).sum()
                                             : p.rightCols(p.cols() - 1).sum();
    return singles > 0.0 ? both / singles : 0.0;
}

inline double herald_ratio_at(double probe, double g, DetectorParams det_h, DetectorParams det_v,
                              Mode herald, int n_max) {
    det_h.dark_mean = 0.0;
    det_v.dark_mean = 0.0;
    JointDistribution const src = mixture_joint({probe, g}, n_max);
    // Crosstalk at most doubles a count, so 2 n_max keeps every output in the window.
    JointDistribution const out = apply_two_mode(src, det_h, det_v, 2 * n_max);
    return coincidence_to_singles(out.probs(), herald);
}

}  // namespace detail

/// Heralded efficiency: coincidence-to-singles ratio of the forward model in
/// the vanishing-intensity limit, with dark counts excluded.
///
/// The limit is taken by first-order Richardson extrapolation from probe
/// means p and p/2, which removes the O(p) accidental-coincidence bias.
inline double heralded_efficiency(SourceParams const& source, DetectorParams const& det_h,
                                  DetectorParams const& det_v, Mode herald, HeraldConfig const& cfg = {}) {
    source.validate();
    det_h.validate();
    det_v.validate();
    detail::require_domain(cfg.probe_mean > 0.0, "probe mean must be positive");
    double const g = source.correlation;
    double const coarse = detail::herald_ratio_at(cfg.probe_mean, g, det_h, det_v, herald, cfg.n_max);
    double const fine = detail::herald_ratio_at(0.5 * cfg.probe_mean, g, det_h, det_v, herald, cfg.n_max);
    return std::clamp(2.0 * fine - coarse, 0.0, 1.0);
}

/// The finite-intensity ratio at a single probe mean, without extrapolation.
inline double heralded_ratio_at_probe(SourceParams const& source, DetectorParams const& det_h,
                                      DetectorParams const& det_v, Mode herald, HeraldConfig const& cfg = {}) {
    source.validate();
    return detail::herald_ratio_at(cfg.probe_mean, source.correlation, det_h, det_v, herald, cfg.n_max);
}

inline CorrelationReport correlation_report(JointDistribution const& joint) {
    CorrelationReport rep;
    rep.mean_interior_ratio = mean_interior_ratio(ratio_matrix(joint));
    rep.spectrum = singular_spectrum(joint);
    rep.product_distance = product_distance(rep.spectrum);
    rep.heralded_efficiency = detail::coincidence_to_singles(joint.probs(), Mode::H);
    LeeResult const lee = lee_criterion(moments(joint));
    rep.lee_nonclassical = lee.nonclassical;
    rep.lee_witness = lee.witness;
    return rep;
}

}  // namespace pnrstat
