// SPDX-License-Identifier: Apache-2.0
// ------------------------------------------------------------------------
// Communication symbols, power allocation with comm-SNR floors, and echo
// frame synthesis under both hypotheses.

#pragma once

#include "channel.hpp"
#include "common.hpp"
#include "rng.hpp"
#include "scene.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace isacdet {

struct SymbolFrame {
    CMatrix symbols; // N x M
};

/// i.i.d. QPSK, unit modulus: exp(j(pi/4 + q pi/2)), q uniform in {0..3}.
inline SymbolFrame draw_symbols(const OfdmGrid& grid, RngStream& rng)
{
    static const std::array<cplx, 4> kQpsk = {
        std::polar(1.0, kPi / 4), std::polar(1.0, 3 * kPi / 4),
        std::polar(1.0, 5 * kPi / 4), std::polar(1.0, 7 * kPi / 4)};
    SymbolFrame f;
    f.symbols.resize(static_cast<Eigen::Index>(grid.n()), static_cast<Eigen::Index>(grid.m()));
    for (Eigen::Index j = 0; j < f.symbols.cols(); ++j)
        for (Eigen::Index i = 0; i < f.symbols.rows(); ++i)
            f.symbols(i, j) = kQpsk[rng.next_u32() >> 30];
    return f;
}

inline SymbolFrame unit_symbols(const OfdmGrid& grid)
{
    return {CMatrix::Ones(static_cast<Eigen::Index>(grid.n()), static_cast<Eigen::Index>(grid.m()))};
}

/// Power allocation a (diagonal of A), stacked symbol-slot by symbol-slot:
/// entry (m - 1) N + n, i.e. column-major over the N x M grid.
struct PowerAllocation {
    RVector gains;
    RVector lower_bounds;

    double power() const { return gains.squaredNorm(); }

    /// gains as an N x M matrix.
    RMatrix grid_view(std::size_t n) const
    {
        return Eigen::Map<const RMatrix>(gains.data(), static_cast<Eigen::Index>(n),
                                         gains.size() / static_cast<Eigen::Index>(n));
    }

    bool feasible(double power_budget, double slack = 1e-9) const
    {
        return gains.size() == lower_bounds.size() && (gains.array() >= lower_bounds.array()).all() &&
               power() <= power_budget + slack;
    }
};

/// Communication channel h_c over subcarriers.
enum class CommChannelModel { Flat, Rayleigh, Fixed };

inline CVector comm_channel(CommChannelModel model, const OfdmGrid& grid, const TrialRng& rng,
                            const std::vector<cplx>& fixed_values = {})
{
    const auto n = static_cast<Eigen::Index>(grid.n());
    switch (model) {
    case CommChannelModel::Flat:
        return CVector::Ones(n);
    case CommChannelModel::Rayleigh: {
        auto s = rng.stream(StreamTag::CommChannel, 0);
        CVector h(n);
        for (Eigen::Index i = 0; i < n; ++i)
            h(i) = s.complex_normal(1.0);
        return h;
    }
    case CommChannelModel::Fixed: {
        require(fixed_values.size() == grid.n(), "fixed comm channel needs N values");
        return Eigen::Map<const CVector>(fixed_values.data(), n);
    }
    }
    return CVector::Ones(n);
}

/// Smallest a_{n,m} with |h_c,n a x|^2 / sigma_c^2 >= gamma:
/// sqrt(gamma sigma_c^2) / |h_c,n x_{n,m}|.
inline RVector comm_lower_bounds(const OfdmGrid& grid, const CVector& comm_channel,
                                 const SymbolFrame& symbols)
{
    const auto n = static_cast<Eigen::Index>(grid.n());
    const auto m = static_cast<Eigen::Index>(grid.m());
    require(comm_channel.size() == n, "comm channel must have N entries");
    for (Eigen::Index i = 0; i < n; ++i)
        if (std::abs(comm_channel(i)) == 0.0)
            throw Error(ErrorKind::ZeroChannel,
                        "comm channel vanishes on subcarrier " + std::to_string(i + 1));
    const double numerator = std::sqrt(grid.comm_snr_target * grid.comm_noise_power);
    RVector bounds(n * m);
    for (Eigen::Index j = 0; j < m; ++j)
        for (Eigen::Index i = 0; i < n; ++i)
            bounds(j * n + i) = numerator / std::abs(comm_channel(i) * symbols.symbols(i, j));
    return bounds;
}

/// Equal power sqrt(P / NM) raised to the floors, then rescaled into the
/// budget when the floors push it over (spare power is shrunk, floors kept).
inline PowerAllocation initial_allocation(const RVector& bounds, double power_budget)
{
    const double floor_power = bounds.squaredNorm();
    if (floor_power > power_budget * (1.0 + 1e-12))
        throw Error(ErrorKind::Infeasible, "SNR floors need " + std::to_string(floor_power) +
                                               " W but the budget is " + std::to_string(power_budget) + " W");
    const double uniform = std::sqrt(power_budget / static_cast<double>(bounds.size()));
    RVector a = bounds.cwiseMax(uniform);
    if (a.squaredNorm() > power_budget) {
        // Shrink the part above the floor until the budget holds.
        const RVector excess = a - bounds;
        double lo = 0.0, hi = 1.0;
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            if ((bounds + mid * excess).squaredNorm() <= power_budget)
                lo = mid;
            else
                hi = mid;
        }
        a = bounds + lo * excess;
    }
    return {a, bounds};
}

enum class Hypothesis { H0, H1 };

enum class RcsModel {
    SwerlingI,     // one lambda_l per path per frame, shared across subcarriers
    PerSubcarrier, // lambda_{n,l} independent across subcarriers
};

struct EchoFrame {
    CMatrix y; // N x M
    Hypothesis hypothesis = Hypothesis::H0;
    std::optional<CMatrix> rcs_draw; // N x L realized lambda_{n,l}, H1 only
};

/// Realized RCS coefficients, N x L. Swerling-I scales a single standard
/// draw per path by sqrt(sigma^2_{n,l}) on each subcarrier.
inline CMatrix draw_rcs(const PathSet& paths, std::size_t n_subcarriers, RcsModel model, RngStream& rng)
{
    const auto n = static_cast<Eigen::Index>(n_subcarriers);
    CMatrix lambda(n, static_cast<Eigen::Index>(paths.size()));
    for (std::size_t l = 0; l < paths.size(); ++l) {
        const auto col = static_cast<Eigen::Index>(l);
        if (model == RcsModel::SwerlingI) {
            const cplx g = rng.complex_normal(1.0);
            for (Eigen::Index i = 0; i < n; ++i)
                lambda(i, col) = g * std::sqrt(paths[l].rcs_variance(i));
        } else {
            for (Eigen::Index i = 0; i < n; ++i)
                lambda(i, col) = rng.complex_normal(paths[l].rcs_variance(i));
        }
    }
    return lambda;
}

inline CMatrix draw_noise(const OfdmGrid& grid, double variance, RngStream& rng)
{
    CMatrix z(static_cast<Eigen::Index>(grid.n()), static_cast<Eigen::Index>(grid.m()));
    for (Eigen::Index j = 0; j < z.cols(); ++j)
        for (Eigen::Index i = 0; i < z.rows(); ++i)
            z(i, j) = rng.complex_normal(variance);
    return z;
}

/// Noiseless echo sum_l lambda_{n,l} h_{n,m,l} a_{n,m} x_{n,m}.
inline CMatrix echo_signal(const std::vector<PathChannel>& channels, const PowerAllocation& alloc,
                           const SymbolFrame& symbols, const CMatrix& lambda)
{
    const Eigen::Index n = symbols.symbols.rows();
    const Eigen::Index m = symbols.symbols.cols();
    require(alloc.gains.size() == n * m, "allocation size must equal N*M");
    require(lambda.cols() == static_cast<Eigen::Index>(channels.size()) && lambda.rows() == n,
            "RCS draw must be N x L");
    CMatrix s = CMatrix::Zero(n, m);
    for (std::size_t l = 0; l < channels.size(); ++l) {
        const auto& h = channels[l].coeffs;
        require(h.rows() == n && h.cols() == m, "channel dimensions must match the grid");
        s.array() += h.array().colwise() * lambda.col(static_cast<Eigen::Index>(l)).array();
    }
    const Eigen::Map<const RMatrix> a(alloc.gains.data(), n, m);
    s.array() *= a.array().cast<cplx>() * symbols.symbols.array();
    return s;
}

/// Echo frame under the given hypothesis. Noise comes from the Noise
/// stream, RCS from the Rcs stream of the same trial, so H0 frames never
/// depend on the allocation or the symbols.
inline EchoFrame synthesize_echo(const OfdmGrid& grid, const PathSet& paths,
                                 const std::vector<PathChannel>& channels, const PowerAllocation& alloc,
                                 const SymbolFrame& symbols, Hypothesis hypothesis, RcsModel rcs_model,
                                 const TrialRng& rng, std::uint64_t trial)
{
    auto noise_stream = rng.stream(StreamTag::Noise, trial);
    EchoFrame frame;
    frame.hypothesis = hypothesis;
    frame.y = draw_noise(grid, grid.radar_noise_power, noise_stream);
    if (hypothesis == Hypothesis::H1) {
        auto rcs_stream = rng.stream(StreamTag::Rcs, trial);
        CMatrix lambda = draw_rcs(paths, grid.n(), rcs_model, rcs_stream);
        frame.y += echo_signal(channels, alloc, symbols, lambda);
        frame.rcs_draw = std::move(lambda);
    }
    return frame;
}

/// Receiver-side removal of the known unit-modulus symbols, y * conj(x).
/// Leaves white circular noise statistically unchanged.
inline CMatrix remove_symbols(const CMatrix& y, const SymbolFrame& symbols)
{
    require(y.rows() == symbols.symbols.rows() && y.cols() == symbols.symbols.cols(),
            "frame and symbol dimensions differ");
    return (y.array() * symbols.symbols.array().conjugate()).matrix();
}

// Frame dump, little-endian: "ISDF", u32 N, u32 M, u32 L, then N*M
// (re, im) float64 pairs in row-major order.

namespace detail {

template <typename T>
void write_le(std::ostream& os, T value)
{
    static_assert(std::endian::native == std::endian::little, "frame dump assumes a little-endian host");
    os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_le(std::istream& is)
{
    T value{};
    is.read(reinterpret_cast<char*>(&value), sizeof(T));
    require(static_cast<bool>(is), "truncated frame dump");
    return value;
}

} // namespace detail

inline void write_frame_dump(std::ostream& os, const CMatrix& y, std::uint32_t n_paths)
{
    os.write("ISDF", 4);
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(y.rows()));
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(y.cols()));
    detail::write_le<std::uint32_t>(os, n_paths);
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
        for (Eigen::Index j = 0; j < y.cols(); ++j) {
            detail::write_le<double>(os, y(i, j).real());
            detail::write_le<double>(os, y(i, j).imag());
        }
    }
}

struct FrameDump {
    CMatrix y;
    std::uint32_t n_paths = 0;
};

inline FrameDump read_frame_dump(std::istream& is)
{
    char magic[4] = {};
    is.read(magic, 4);
    require(static_cast<bool>(is) && std::string(magic, 4) == "ISDF", "not a frame dump");
    const auto n = detail::read_le<std::uint32_t>(is);
    const auto m = detail::read_le<std::uint32_t>(is);
    FrameDump d;
    d.n_paths = detail::read_le<std::uint32_t>(is);
    d.y.resize(n, m);
    for (std::uint32_t i = 0; i < n; ++i) {
        for (std::uint32_t j = 0; j < m; ++j) {
            const double re = detail::read_le<double>(is);
            const double im = detail::read_le<double>(is);
            d.y(i, j) = {re, im};
        }
    }
    return d;
}

} // namespace isacdet
