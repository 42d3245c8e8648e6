// Copyright 2026 The pnrstat Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include "errors.hpp"

namespace pnrstat {

struct SimplexOptions {
    int max_iterations = 20000;
    double tolerance = 1e-10;  // relative spread of objective values over the simplex
    double initial_step = 0.1;
    int max_restarts = 4;
};

struct SimplexResult {
    std::vector<double> point;
    double value = std::numeric_limits<double>::infinity();
    int iterations = 0;
    bool converged = false;
    /// Best objective after each iteration; nonincreasing.
    std::vector<double> best_history;
};

/// Nelder-Mead downhill simplex with restarts from the incumbent.
///
/// Unconstrained; callers enforce bounds by reparameterizing.
inline SimplexResult nelder_mead(std::function<double(std::vector<double> const&)> const& objective,
                                 std::vector<double> start, SimplexOptions const& opts = {}) {
    std::size_t const dim = start.size();
    detail::require_contract(dim >= 1, "nelder_mead needs at least one parameter");
    detail::require_contract(opts.max_iterations >= 1 && opts.tolerance > 0.0, "invalid simplex options");

    auto eval = [&](std::vector<double> const& x) {
        double const v = objective(x);
        return std::isfinite(v) ? v : std::numeric_limits<double>::max();
    };

    SimplexResult res;
    res.point = start;
    res.value = eval(start);

    std::vector<std::vector<double>> simplex(dim + 1);
    std::vector<double> values(dim + 1);
    std::vector<std::size_t> order(dim + 1);
    std::vector<double> centroid(dim), trial(dim), trial2(dim);

    auto note_best = [&](std::vector<double> const& x, double v) {
        if (v < res.value) {
            res.value = v;
            res.point = x;
        }
    };

    for (int restart = 0; restart <= opts.max_restarts; ++restart) {
        double const value_before = res.value;
        simplex[0] = res.point;
        values[0] = res.value;
        for (std::size_t i = 0; i < dim; ++i) {
            simplex[i + 1] = res.point;
            double const step = opts.initial_step * std::max(1.0, std::abs(res.point[i]));
            simplex[i + 1][i] += step;
            values[i + 1] = eval(simplex[i + 1]);
            note_best(simplex[i + 1], values[i + 1]);
        }

        bool local_converged = false;
        while (res.iterations < opts.max_iterations) {
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
            std::size_t const best = order.front();
            std::size_t const worst = order.back();
            std::size_t const second = order[dim - 1];

            double const spread = values[worst] - values[best];
            if (spread <= opts.tolerance * std::max(1.0, std::abs(values[best]))) {
                local_converged = true;
                break;
            }
            ++res.iterations;

            std::fill(centroid.begin(), centroid.end(), 0.0);
            for (std::size_t k = 0; k <= dim; ++k) {
                if (k == worst) continue;
                for (std::size_t i = 0; i < dim; ++i) centroid[i] += simplex[k][i] / static_cast<double>(dim);
            }
            auto along = [&](double t, std::vector<double>& out) {
                for (std::size_t i = 0; i < dim; ++i)
                    out[i] = centroid[i] + t * (simplex[worst][i] - centroid[i]);
            };

            along(-1.0, trial);
            double const f_reflect = eval(trial);
            if (f_reflect < values[best]) {
                along(-2.0, trial2);
                double const f_expand = eval(trial2);
                if (f_expand < f_reflect) {
                    simplex[worst] = trial2;
                    values[worst] = f_expand;
                } else {
                    simplex[worst] = trial;
                    values[worst] = f_reflect;
                }
            } else if (f_reflect < values[second]) {
                simplex[worst] = trial;
                values[worst] = f_reflect;
            } else {
                bool const outside = f_reflect < values[worst];
                along(outside ? -0.5 : 0.5, trial2);
                double const f_contract = eval(trial2);
                if (f_contract < std::min(f_reflect, values[worst])) {
                    simplex[worst] = trial2;
                    values[worst] = f_contract;
                } else {
                    for (std::size_t k = 0; k <= dim; ++k) {
                        if (k == best) continue;
                        for (std::size_t i = 0; i < dim; ++i)
                            simplex[k][i] = simplex[best][i] + 0.5 * (simplex[k][i] - simplex[best][i]);
                        values[k] = eval(simplex[k]);
                    }
                }
            }
            for (std::size_t k = 0; k <= dim; ++k) note_best(simplex[k], values[k]);
            res.best_history.push_back(res.value);
        }
        if (!local_converged) return res;
        if (restart > 0 && value_before - res.value <= opts.tolerance * std::max(1.0, std::abs(res.value))) {
            res.converged = true;
            return res;
        }
    }
    res.converged = true;
    return res;
}

/// Golden-section search on [lo, hi] after a coarse grid scan; the result never leaves the interval.
inline SimplexResult bounded_scalar_minimize(std::function<double(double)> const& objective, double lo, double hi,
                                             int grid = 21, double tolerance = 1e-9, int max_iterations = 200) {
    detail::require_contract(hi > lo && grid >= 3, "invalid bracket");
    SimplexResult res;
    std::vector<double> xs(grid), fs(grid);
    for (int i = 0; i < grid; ++i) {
        xs[i] = lo + (hi - lo) * i / (grid - 1);
        fs[i] = objective(xs[i]);
        if (fs[i] < res.value) {
            res.value = fs[i];
            res.point = {xs[i]};
        }
    }
    int const k = static_cast<int>(std::min_element(fs.begin(), fs.end()) - fs.begin());
    double a = xs[std::max(0, k - 1)];
    double b = xs[std::min(grid - 1, k + 1)];
    double const inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = objective(c);
    double fd = objective(d);
    while (res.iterations < max_iterations) {
        if (b - a <= tolerance * (hi - lo)) {
            res.converged = true;
            break;
        }
        ++res.iterations;
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = objective(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = objective(d);
        }
        if (fc < res.value) {
            res.value = fc;
            res.point = {c};
        }
        if (fd < res.value) {
            res.value = fd;
            res.point = {d};
        }
        res.best_history.push_back(res.value);
    }
    return res;
}

}  // namespace pnrstat
