// SPDX-License-Identifier: Apache-2.0
// ------------------------------------------------------------------------
// Joint transmit power allocation and detector weight design.
//
// Per-path signal energy with allocation a is
//     d_l(a)^2 = ||H_l A X||_F^2 = sum_i G_{i,l} a_i^2,
//     G_{i,l} = g_{n,l}^2 |h_{n,m,l}|^2 |x_{n,m}|^2,  i = (m - 1) N + n,
// where g is an optional per-subcarrier gain profile (all ones by default).
// The design objective is J(a, w) = (w^T d(a))^2. For a fixed w it is
// convex in a and is raised by minorize-maximize steps on its tangent
// plane; for a fixed a its maximizer over the unit sphere is d / ||d||.

#pragma once

#include "channel.hpp"
#include "common.hpp"
#include "detector.hpp"
#include "waveform.hpp"

#include <cmath>
#include <optional>
#include <vector>

namespace isacdet {

/// Diagonal quadratic form a^T diag(r) a.
struct QuadraticForm {
    RVector r_diag;
};

/// Per-entry, per-path energy coefficients G (NM x L).
inline RMatrix path_energy_matrix(const std::vector<PathChannel>& channels, const SymbolFrame& symbols,
                                  const std::optional<RMatrix>& gain_profile = std::nullopt)
{
    const Eigen::Index n = symbols.symbols.rows();
    const Eigen::Index m = symbols.symbols.cols();
    const auto paths = static_cast<Eigen::Index>(channels.size());
    if (gain_profile)
        require(gain_profile->rows() == n && gain_profile->cols() == paths, "gain profile must be N x L");
    RMatrix g(n * m, paths);
    for (Eigen::Index l = 0; l < paths; ++l) {
        const auto& h = channels[static_cast<std::size_t>(l)].coeffs;
        require(h.rows() == n && h.cols() == m, "channel dimensions must match the symbols");
        for (Eigen::Index j = 0; j < m; ++j) {
            for (Eigen::Index i = 0; i < n; ++i) {
                const double gain = gain_profile ? (*gain_profile)(i, l) : 1.0;
                g(j * n + i, l) = gain * gain * std::norm(h(i, j)) * std::norm(symbols.symbols(i, j));
            }
        }
    }
    return g;
}

/// r_i = sum_l w_l^2 G_{i,l}, so that a^T R a = sum_l w_l^2 ||H_l A X||_F^2.
inline QuadraticForm build_quadratic(const std::vector<PathChannel>& channels, const SymbolFrame& symbols,
                                     const WeightVector& w,
                                     const std::optional<RMatrix>& gain_profile = std::nullopt)
{
    require(w.size() == channels.size(), "one weight per path is required");
    const RMatrix g = path_energy_matrix(channels, symbols, gain_profile);
    return {g * w.values().cwiseAbs2()};
}

inline double objective(const PowerAllocation& alloc, const QuadraticForm& quad)
{
    require(alloc.gains.size() == quad.r_diag.size(), "allocation and quadratic form sizes differ");
    return quad.r_diag.dot(alloc.gains.cwiseAbs2());
}

/// d_l = ||H_l A X||_F for every path.
inline RVector path_amplitudes(const RMatrix& energy, const RVector& gains)
{
    return (energy.transpose() * gains.cwiseAbs2()).cwiseSqrt();
}

/// J(a, w) = (w^T d(a))^2.
inline double design_objective(const RMatrix& energy, const RVector& gains, const WeightVector& w)
{
    const double s = w.values().dot(path_amplitudes(energy, gains));
    return s * s;
}

/// Tangent coefficients: J is minorized at a_k by J(a_k) + 2 c^T (a - a_k)
/// with c = R_k a_k and R_k = diag(sum_l (w^T d_k) w_l / d_{k,l} G_{.,l}).
/// Paths with d_{k,l} = 0 contribute nothing.
inline QuadraticForm linearized_quadratic(const RMatrix& energy, const RVector& gains, const WeightVector& w)
{
    const RVector d = path_amplitudes(energy, gains);
    const double s = w.values().dot(d);
    RVector coef = RVector::Zero(d.size());
    for (Eigen::Index l = 0; l < d.size(); ++l)
        if (d(l) > 0)
            coef(l) = s * w.values()(l) / d(l);
    return {energy * coef};
}

struct PowerStepOptions {
    double residual_tolerance = 1e-10; // relative to the budget
    int max_bisections = 500;
};

/// Maximizes c^T a subject to ||a||^2 <= P and a >= bounds, with c = R a_k.
/// KKT: a_i(mu) = max(bound_i, c_i / (2 mu)); mu is bisected until the
/// used power is within tolerance of P. The returned point is taken from
/// the feasible side of the bracket.
inline PowerAllocation mm_power_step(const PowerAllocation& current, const QuadraticForm& quad,
                                     const RVector& bounds, double power_budget,
                                     const PowerStepOptions& options = {})
{
    require(current.gains.size() == quad.r_diag.size() && bounds.size() == quad.r_diag.size(),
            "allocation, bounds and quadratic form sizes differ");
    require((bounds.array() >= 0).all(), "bounds must be non-negative");
    const double floor_power = bounds.squaredNorm();
    if (floor_power > power_budget * (1.0 + 1e-12))
        throw Error(ErrorKind::Infeasible, "SNR floors need " + std::to_string(floor_power) +
                                               " W but the budget is " + std::to_string(power_budget) + " W");

    const RVector c = quad.r_diag.cwiseProduct(current.gains).cwiseMax(0.0);
    const double c_norm = c.norm();
    const double spare = power_budget - floor_power;
    if (c_norm == 0.0 || spare <= 0.0)
        return {bounds, bounds};

    auto at = [&](double mu) { return bounds.cwiseMax(c / (2.0 * mu)); };
    // Sum of squares is >= P at lo and <= P at hi.
    double lo = c_norm / (2.0 * std::sqrt(power_budget));
    double hi = c_norm / (2.0 * std::sqrt(spare));
    const double tol = options.residual_tolerance * power_budget;
    for (int it = 0; it < options.max_bisections; ++it) {
        const double mid = std::sqrt(lo * hi);
        if (!(mid > lo && mid < hi))
            break;
        const double used = at(mid).squaredNorm();
        if (used > power_budget)
            lo = mid;
        else
            hi = mid;
        if (std::abs(used - power_budget) < tol && used <= power_budget)
            break;
    }
    // Spend the residual: scale the entries above their floors onto the
    // budget, so consecutive steps do not lose up to tol of power.
    RVector a = at(hi);
    const auto free = (a.array() > bounds.array()).cast<double>();
    const double free_power = (a.array().square() * free).sum();
    const double target = power_budget - (bounds.array().square() * (1.0 - free)).sum();
    if (free_power > 0 && target > free_power) {
        double scale = std::sqrt(target / free_power);
        auto scaled = [&] { return RVector(free * a.array() * scale + (1.0 - free) * a.array()); };
        RVector b = scaled();
        for (int k = 0; k < 64 && b.squaredNorm() > power_budget; ++k) { // rounding
            scale = std::nextafter(scale, 0.0);
            b = scaled();
        }
        if (b.squaredNorm() <= power_budget)
            a = std::move(b);
    }
    return {a, bounds};
}

/// w = d / ||d||, the maximizer of (w^T d)^2 on the unit sphere.
inline WeightVector update_weights(const std::vector<PathChannel>& channels, const PowerAllocation& alloc,
                                   const SymbolFrame& symbols,
                                   const std::optional<RMatrix>& gain_profile = std::nullopt)
{
    const RVector d = path_amplitudes(path_energy_matrix(channels, symbols, gain_profile), alloc.gains);
    if (!(d.maxCoeff() > 0.0))
        throw Error(ErrorKind::ZeroSignal, "every path carries zero energy");
    return WeightVector::normalized(d);
}

struct JointOptions {
    bool optimize_power = true;
    bool optimize_weights = true;
    double outer_tolerance = 1e-6; // relative objective improvement
    int max_outer = 100;
    double inner_tolerance = 1e-9;
    int max_inner = 1000;
    PowerStepOptions step;
};

struct JointSolution {
    PowerAllocation alloc;
    WeightVector w;
    std::vector<double> objective_trace; // J after each outer iteration
    bool converged = false;
    int inner_steps = 0;
};

struct JointProblem {
    std::vector<PathChannel> channels;
    SymbolFrame symbols;
    RVector bounds;
    double power_budget = 1.0;
    std::optional<RMatrix> gain_profile;
};

/// MM steps on a with w fixed, until the relative gain in J falls below
/// the inner tolerance.
inline PowerAllocation maximize_power(const RMatrix& energy, PowerAllocation a, const WeightVector& w,
                                      const RVector& bounds, double power_budget, const JointOptions& options,
                                      int* steps = nullptr, std::vector<double>* inner_trace = nullptr)
{
    double current = design_objective(energy, a.gains, w);
    for (int it = 0; it < options.max_inner; ++it) {
        const QuadraticForm quad = linearized_quadratic(energy, a.gains, w);
        PowerAllocation next = mm_power_step(a, quad, bounds, power_budget, options.step);
        const double value = design_objective(energy, next.gains, w);
        if (steps != nullptr)
            ++*steps;
        if (inner_trace != nullptr)
            inner_trace->push_back(value);
        const double gain = value - current;
        a = std::move(next);
        current = value;
        if (gain <= options.inner_tolerance * std::max(std::abs(value), 1e-300))
            break;
    }
    return a;
}

/// Alternates MM power updates (to stationarity) with the closed-form
/// weight update, starting from the given allocation and equal weights.
inline JointSolution joint_design(const JointProblem& problem, const PowerAllocation& initial,
                                  const JointOptions& options = {})
{
    const RMatrix energy = path_energy_matrix(problem.channels, problem.symbols, problem.gain_profile);
    const double floor_power = problem.bounds.squaredNorm();
    if (floor_power > problem.power_budget * (1.0 + 1e-12))
        throw Error(ErrorKind::Infeasible, "SNR floors exceed the power budget");
    require(initial.gains.size() == problem.bounds.size(), "initial allocation has the wrong size");

    JointSolution sol;
    sol.alloc = initial;
    sol.w = WeightVector::equal(problem.channels.size());
    double previous = design_objective(energy, sol.alloc.gains, sol.w);

    for (int outer = 0; outer < options.max_outer; ++outer) {
        if (options.optimize_power)
            sol.alloc = maximize_power(energy, sol.alloc, sol.w, problem.bounds, problem.power_budget, options,
                                       &sol.inner_steps);
        if (options.optimize_weights) {
            const RVector d = path_amplitudes(energy, sol.alloc.gains);
            if (!(d.maxCoeff() > 0.0))
                throw Error(ErrorKind::ZeroSignal, "every path carries zero energy");
            sol.w = WeightVector::normalized(d);
        }
        const double value = design_objective(energy, sol.alloc.gains, sol.w);
        sol.objective_trace.push_back(value);
        if (value - previous <= options.outer_tolerance * std::max(std::abs(value), 1e-300)) {
            sol.converged = true;
            break;
        }
        previous = value;
    }
    return sol;
}

} // namespace isacdet
