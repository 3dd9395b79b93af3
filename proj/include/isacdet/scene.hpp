// SPDX-License-Identifier: Apache-2.0
// ------------------------------------------------------------------------
// Experiment scene: OFDM grid parameters, propagation paths, and the
// mapping from 2D geometry (BS, static reflectors, moving target) to
// integer delay/Doppler taps.

#pragma once

#include "common.hpp"

#include <array>
#include <cmath>
#include <set>
#include <utility>
#include <vector>

namespace isacdet {

struct OfdmGrid {
    std::size_t n_subcarriers = 16;     // N
    std::size_t n_symbols = 16;         // M
    double subcarrier_spacing = 120e3;  // Hz
    double symbol_duration = 1.0 / 120e3; // s, T = 1 / subcarrier_spacing
    double carrier_freq = 5e9;          // Hz
    double comm_noise_power = 1e-11;    // W
    double radar_noise_power = 1e-11;   // W
    double power_budget = 100.0;        // W
    double comm_snr_target = 6.309573444801933; // linear (8 dB)

    std::size_t n() const { return n_subcarriers; }
    std::size_t m() const { return n_symbols; }
    std::size_t size() const { return n_subcarriers * n_symbols; }

    /// Grid with T tied to the subcarrier spacing.
    static OfdmGrid make(std::size_t n, std::size_t m, double spacing, double carrier)
    {
        OfdmGrid g;
        g.n_subcarriers = n;
        g.n_symbols = m;
        g.subcarrier_spacing = spacing;
        g.symbol_duration = 1.0 / spacing;
        g.carrier_freq = carrier;
        return g;
    }

    void validate() const
    {
        require(n_subcarriers >= 2 && n_symbols >= 2, "grid needs N >= 2 and M >= 2");
        require(subcarrier_spacing > 0 && symbol_duration > 0 && carrier_freq > 0,
                "grid frequencies and durations must be positive");
        require(comm_noise_power > 0 && radar_noise_power > 0 && power_budget > 0,
                "noise powers and power budget must be positive");
        require(comm_snr_target >= 0, "comm SNR target must be non-negative");
        require(std::abs(symbol_duration * subcarrier_spacing - 1.0) <= 1e-12,
                "symbol duration must equal 1 / subcarrier spacing");
    }
};

struct Path {
    int delay_tap = 0;   // k, in [0, N)
    int doppler_tap = 0; // r, in [0, M)
    cplx path_loss{1.0, 0.0};
    RVector rcs_variance; // length N, sigma^2_{n,l}
};

struct PathSet {
    std::vector<Path> paths;

    std::size_t size() const { return paths.size(); }
    bool empty() const { return paths.empty(); }
    const Path& operator[](std::size_t i) const { return paths[i]; }
    Path& operator[](std::size_t i) { return paths[i]; }

    void validate(const OfdmGrid& grid) const
    {
        std::set<std::pair<int, int>> seen;
        for (const auto& p : paths) {
            require(p.delay_tap >= 0 && static_cast<std::size_t>(p.delay_tap) < grid.n(),
                    "delay tap out of range");
            require(p.doppler_tap >= 0 && static_cast<std::size_t>(p.doppler_tap) < grid.m(),
                    "Doppler tap out of range");
            require(static_cast<std::size_t>(p.rcs_variance.size()) == grid.n(),
                    "rcs variance profile must have N entries");
            require((p.rcs_variance.array() >= 0.0).all(), "rcs variance must be non-negative");
            if (!seen.insert({p.delay_tap, p.doppler_tap}).second)
                throw Error(ErrorKind::DuplicateTap, "two paths share the tap pair (" +
                                                         std::to_string(p.delay_tap) + ", " +
                                                         std::to_string(p.doppler_tap) + ")");
        }
    }
};

using Point2 = std::array<double, 2>;

struct Geometry {
    Point2 bs_position{0.0, 0.0};
    std::vector<Point2> reflector_positions;
    Point2 target_position{0.0, 55.0};
    Point2 target_velocity{30.0, 50.0};

    void validate() const
    {
        std::vector<Point2> all{bs_position, target_position};
        all.insert(all.end(), reflector_positions.begin(), reflector_positions.end());
        for (std::size_t i = 0; i < all.size(); ++i)
            for (std::size_t j = i + 1; j < all.size(); ++j)
                require(all[i] != all[j], "scene positions must be pairwise distinct");
    }

    /// Reference scene: two reflectors, target at (0, 55) m moving at (30, 50) m/s.
    static Geometry table_one()
    {
        Geometry g;
        g.reflector_positions = {{-30.0, 10.0}, {20.0, 30.0}};
        return g;
    }
};

/// One-way BS-to-target leg, either direct or bouncing off one reflector.
struct Leg {
    double length = 0.0;       // m
    double radial_speed = 0.0; // m/s, rate of change of the leg length
};

/// A round trip is an unordered pair of legs (outbound, inbound).
struct Route {
    std::size_t outbound = 0;
    std::size_t inbound = 0;
    double delay = 0.0;   // s
    double doppler = 0.0; // Hz
};

namespace detail {

inline double distance(const Point2& a, const Point2& b)
{
    return std::hypot(a[0] - b[0], a[1] - b[1]);
}

} // namespace detail

/// Legs in the order {direct, via reflector 1, ..., via reflector R}.
inline std::vector<Leg> enumerate_legs(const Geometry& geom)
{
    std::vector<Point2> last_hop{geom.bs_position};
    last_hop.insert(last_hop.end(), geom.reflector_positions.begin(),
                    geom.reflector_positions.end());

    std::vector<Leg> legs;
    for (std::size_t i = 0; i < last_hop.size(); ++i) {
        const Point2& from = last_hop[i];
        const double final_hop = detail::distance(from, geom.target_position);
        Leg leg;
        leg.length = final_hop + (i == 0 ? 0.0 : detail::distance(geom.bs_position, from));
        // Reflectors are static, so only the final hop changes length.
        leg.radial_speed = (geom.target_velocity[0] * (geom.target_position[0] - from[0]) +
                            geom.target_velocity[1] * (geom.target_position[1] - from[1])) /
                           final_hop;
        legs.push_back(leg);
    }
    return legs;
}

/// Unordered pairs (i <= j) of legs; direct-direct (LoS) comes first.
inline std::vector<Route> enumerate_routes(const Geometry& geom, double carrier_freq)
{
    const auto legs = enumerate_legs(geom);
    std::vector<Route> routes;
    for (std::size_t i = 0; i < legs.size(); ++i) {
        for (std::size_t j = i; j < legs.size(); ++j) {
            Route r;
            r.outbound = i;
            r.inbound = j;
            r.delay = (legs[i].length + legs[j].length) / kSpeedOfLight;
            r.doppler = carrier_freq / kSpeedOfLight * (legs[i].radial_speed + legs[j].radial_speed);
            routes.push_back(r);
        }
    }
    return routes;
}

inline int wrap_tap(double scaled, std::size_t modulus)
{
    const auto m = static_cast<long long>(modulus);
    long long tap = std::llround(scaled) % m;
    if (tap < 0)
        tap += m;
    return static_cast<int>(tap);
}

/// Free-space round-trip amplitudes for each route, normalized so the
/// LoS route has unit gain: beta_l = d_los^2 / (d_out * d_in).
inline std::vector<cplx> free_space_path_losses(const Geometry& geom)
{
    const auto legs = enumerate_legs(geom);
    const double los = legs.front().length;
    std::vector<cplx> out;
    for (std::size_t i = 0; i < legs.size(); ++i)
        for (std::size_t j = i; j < legs.size(); ++j)
            out.emplace_back(los * los / (legs[i].length * legs[j].length), 0.0);
    return out;
}

/// Maps scene geometry to a PathSet. Delay tap = round(tau * N * df) mod N,
/// Doppler tap = round(nu * M * T) mod M. rcs_variance is left at zero for
/// the caller to fill in.
inline PathSet taps_from_geometry(const Geometry& geom, const OfdmGrid& grid,
                                  const std::vector<cplx>& path_losses)
{
    geom.validate();
    const auto routes = enumerate_routes(geom, grid.carrier_freq);
    require(path_losses.size() == routes.size(),
            "expected " + std::to_string(routes.size()) + " path losses, got " +
                std::to_string(path_losses.size()));

    PathSet set;
    std::set<std::pair<int, int>> seen;
    for (std::size_t l = 0; l < routes.size(); ++l) {
        Path p;
        p.delay_tap = wrap_tap(routes[l].delay * static_cast<double>(grid.n()) * grid.subcarrier_spacing,
                               grid.n());
        p.doppler_tap = wrap_tap(routes[l].doppler * static_cast<double>(grid.m()) * grid.symbol_duration,
                                 grid.m());
        p.path_loss = path_losses[l];
        p.rcs_variance = RVector::Zero(static_cast<Eigen::Index>(grid.n()));
        if (!seen.insert({p.delay_tap, p.doppler_tap}).second)
            throw Error(ErrorKind::DuplicateTap,
                        "route " + std::to_string(l) + " collapses onto tap pair (" +
                            std::to_string(p.delay_tap) + ", " + std::to_string(p.doppler_tap) +
                            ") at this grid resolution");
        set.paths.push_back(std::move(p));
    }
    return set;
}

/// Splits a total RCS variance between the LoS path (index 0) and the
/// remaining NLoS paths, flat across subcarriers.
inline void assign_rcs_split(PathSet& paths, std::size_t n_subcarriers, double total_variance,
                             double nlos_fraction)
{
    require(total_variance >= 0, "total RCS variance must be non-negative");
    require(nlos_fraction >= 0 && nlos_fraction <= 1, "NLoS fraction must lie in [0, 1]");
    const auto n = static_cast<Eigen::Index>(n_subcarriers);
    const std::size_t nlos = paths.size() > 0 ? paths.size() - 1 : 0;
    for (std::size_t l = 0; l < paths.size(); ++l) {
        double v;
        if (nlos == 0)
            v = total_variance;
        else if (l == 0)
            v = (1.0 - nlos_fraction) * total_variance;
        else
            v = nlos_fraction * total_variance / static_cast<double>(nlos);
        paths[l].rcs_variance = RVector::Constant(n, v);
    }
}

} // namespace isacdet
