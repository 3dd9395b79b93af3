// SPDX-License-Identifier: Apache-2.0
// ------------------------------------------------------------------------
// Time-frequency channel coefficients and the rank-one subspace
// projectors used by the GLRT.

#pragma once

#include "common.hpp"
#include "scene.hpp"

#include <cmath>
#include <vector>

namespace isacdet {

struct PathChannel {
    CMatrix coeffs;   // N x M, h_{n,m,l}
    CVector steering; // unit-norm, spans the column space of coeffs
};

/// h_{n,m,l} = beta * exp(j2pi nu n T) * exp(-j2pi (nu + m df) tau) with
/// 1-based n, m; nu = r / (M T), tau = k / (N df).
inline PathChannel path_coeffs(const Path& path, const OfdmGrid& grid)
{
    const auto n_sc = static_cast<Eigen::Index>(grid.n());
    const auto n_sym = static_cast<Eigen::Index>(grid.m());
    require(path.delay_tap >= 0 && path.delay_tap < n_sc, "delay tap out of range");
    require(path.doppler_tap >= 0 && path.doppler_tap < n_sym, "Doppler tap out of range");

    const double nu = path.doppler_tap / (static_cast<double>(grid.m()) * grid.symbol_duration);
    const double tau = path.delay_tap / (static_cast<double>(grid.n()) * grid.subcarrier_spacing);

    PathChannel ch;
    ch.coeffs.resize(n_sc, n_sym);
    ch.steering.resize(n_sc);
    const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(n_sc));
    for (Eigen::Index i = 0; i < n_sc; ++i) {
        const double n = static_cast<double>(i + 1);
        const cplx doppler = std::polar(1.0, 2.0 * kPi * nu * n * grid.symbol_duration);
        ch.steering(i) = doppler * inv_sqrt_n;
        for (Eigen::Index j = 0; j < n_sym; ++j) {
            const double m = static_cast<double>(j + 1);
            const cplx delay = std::polar(1.0, -2.0 * kPi * (nu + m * grid.subcarrier_spacing) * tau);
            ch.coeffs(i, j) = path.path_loss * doppler * delay;
        }
    }
    return ch;
}

inline std::vector<PathChannel> path_channels(const PathSet& paths, const OfdmGrid& grid)
{
    std::vector<PathChannel> out;
    out.reserve(paths.size());
    for (const auto& p : paths.paths)
        out.push_back(path_coeffs(p, grid));
    return out;
}

/// Mutually orthogonal rank-one projectors P_l = u_l u_l^H stored as the
/// columns u_l of a D x L matrix, plus the complement P_n = I - sum_l P_l.
/// Projection energies of a D x C observation are computed column-wise
/// through inner products; dense D x D matrices are only built on request.
class ProjectorSet {
  public:
    static constexpr double kOrthogonalityTolerance = 1e-8;

    ProjectorSet() = default;

    /// Normalizes each column and rejects non-orthogonal sets.
    explicit ProjectorSet(CMatrix steering) : steering_(std::move(steering))
    {
        require(steering_.cols() >= 1, "projector set needs at least one path");
        require(steering_.cols() < steering_.rows(), "number of paths must be below the dimension");
        for (Eigen::Index l = 0; l < steering_.cols(); ++l) {
            const double norm = steering_.col(l).norm();
            require(norm > 0, "steering vector must be nonzero");
            steering_.col(l) /= norm;
        }
        for (Eigen::Index a = 0; a < steering_.cols(); ++a) {
            for (Eigen::Index b = a + 1; b < steering_.cols(); ++b) {
                // ||P_a P_b||_F = |u_a^H u_b| for unit vectors.
                const double overlap = std::abs(steering_.col(a).dot(steering_.col(b)));
                if (overlap > kOrthogonalityTolerance)
                    throw Error(ErrorKind::NonOrthogonalPaths,
                                "paths " + std::to_string(a) + " and " + std::to_string(b) +
                                    " overlap with ||P_a P_b||_F = " + std::to_string(overlap));
            }
        }
    }

    std::size_t size() const { return static_cast<std::size_t>(steering_.cols()); }
    Eigen::Index dimension() const { return steering_.rows(); }
    const CMatrix& steering() const { return steering_; }

    /// ||P_l Y||_F^2 for every l.
    RVector signal_energies(const CMatrix& y) const
    {
        const CMatrix coeffs = steering_.adjoint() * y; // L x C
        return coeffs.rowwise().squaredNorm();
    }

    /// ||P_n Y||_F^2 from the explicit residual Y - sum_l u_l u_l^H Y.
    double noise_energy(const CMatrix& y) const
    {
        const CMatrix residual = y - steering_ * (steering_.adjoint() * y);
        return residual.squaredNorm();
    }

    CMatrix apply_signal(std::size_t l, const CMatrix& y) const
    {
        const auto u = steering_.col(static_cast<Eigen::Index>(l));
        return u * (u.adjoint() * y);
    }

    CMatrix apply_noise(const CMatrix& y) const
    {
        return y - steering_ * (steering_.adjoint() * y);
    }

    CMatrix dense_signal(std::size_t l) const
    {
        const auto u = steering_.col(static_cast<Eigen::Index>(l));
        return u * u.adjoint();
    }

    CMatrix dense_noise() const
    {
        return CMatrix::Identity(dimension(), dimension()) - steering_ * steering_.adjoint();
    }

  private:
    CMatrix steering_;
};

/// Column-space projectors for a PathSet. Under the channel model the
/// steering vectors depend only on the Doppler tap; paths are orthogonal
/// when their Doppler taps differ and M divides N(r_1 - r_2), e.g. N = M.
inline ProjectorSet build_projectors(const PathSet& paths, const OfdmGrid& grid)
{
    require(!paths.empty(), "build_projectors needs at least one path");
    require(paths.size() < grid.n(), "number of paths must be below N");
    CMatrix steering(static_cast<Eigen::Index>(grid.n()), static_cast<Eigen::Index>(paths.size()));
    for (std::size_t l = 0; l < paths.size(); ++l)
        steering.col(static_cast<Eigen::Index>(l)) = path_coeffs(paths[l], grid).steering;
    return ProjectorSet(std::move(steering));
}

/// Reference projector H (H^H H)^+ H^H formed from the dense N x M
/// coefficient matrix of one path.
inline CMatrix dense_reference_projector(const CMatrix& coeffs)
{
    const CMatrix gram = coeffs.adjoint() * coeffs;
    const CMatrix gram_pinv = gram.completeOrthogonalDecomposition().pseudoInverse();
    return coeffs * gram_pinv * coeffs.adjoint();
}

/// Delay-Doppler bin signature over the whole frame: the N*M vector
/// vec(h_{.,.}(k, r)) with unit path loss, normalized. Unlike the column
/// steering vector it depends on the delay tap too.
inline CVector bin_signature(int delay_tap, int doppler_tap, const OfdmGrid& grid)
{
    Path p;
    p.delay_tap = delay_tap;
    p.doppler_tap = doppler_tap;
    const CMatrix c = path_coeffs(p, grid).coeffs;
    CVector v = Eigen::Map<const CVector>(c.data(), c.size());
    return v / v.norm();
}

} // namespace isacdet
