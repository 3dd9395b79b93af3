// SPDX-License-Identifier: Apache-2.0
// ------------------------------------------------------------------------
// Dense reference implementations. Slow and memory hungry on purpose:
// every quantity is formed from explicit matrices so the fast paths in
// channel/detector/optimizer can be checked against them in tests.

#pragma once

#include "channel.hpp"
#include "common.hpp"
#include "detector.hpp"
#include "scene.hpp"
#include "waveform.hpp"

#include <vector>

namespace isacdet::reference {

/// Block row [diag(h_{.,1,l}) ... diag(h_{.,M,l})], N x NM.
inline CMatrix block_channel(const CMatrix& coeffs)
{
    const Eigen::Index n = coeffs.rows();
    const Eigen::Index m = coeffs.cols();
    CMatrix h = CMatrix::Zero(n, n * m);
    for (Eigen::Index j = 0; j < m; ++j)
        h.block(0, j * n, n, n) = coeffs.col(j).asDiagonal();
    return h;
}

/// Block-diagonal symbol matrix, NM x M, with x_m in block m.
inline CMatrix block_symbols(const CMatrix& symbols)
{
    const Eigen::Index n = symbols.rows();
    const Eigen::Index m = symbols.cols();
    CMatrix x = CMatrix::Zero(n * m, m);
    for (Eigen::Index j = 0; j < m; ++j)
        x.block(j * n, j, n, 1) = symbols.col(j);
    return x;
}

/// s_m = e_m (x) x_m.
inline CVector stacked_symbol(const CMatrix& symbols, Eigen::Index m)
{
    CVector e = CVector::Zero(symbols.cols());
    e(m) = 1.0;
    CVector s(symbols.size());
    for (Eigen::Index j = 0; j < symbols.cols(); ++j)
        s.segment(j * symbols.rows(), symbols.rows()) = e(j) * symbols.col(m);
    return s;
}

/// R = sum_{l,m} w_l^2 diag(s_m)^H H_l^H H_l diag(s_m), NM x NM.
inline CMatrix dense_quadratic(const std::vector<PathChannel>& channels, const SymbolFrame& symbols,
                               const WeightVector& w)
{
    const Eigen::Index nm = symbols.symbols.size();
    CMatrix r = CMatrix::Zero(nm, nm);
    for (std::size_t l = 0; l < channels.size(); ++l) {
        const CMatrix h = block_channel(channels[l].coeffs);
        const CMatrix gram = h.adjoint() * h;
        for (Eigen::Index m = 0; m < symbols.symbols.cols(); ++m) {
            const CVector s = stacked_symbol(symbols.symbols, m);
            r += w[l] * w[l] * (s.conjugate().asDiagonal() * gram * s.asDiagonal());
        }
    }
    return r;
}

/// ||H_l A X||_F^2 from explicit products.
inline double dense_path_energy(const PathChannel& channel, const PowerAllocation& alloc,
                                const SymbolFrame& symbols)
{
    const CMatrix a = alloc.gains.cast<cplx>().asDiagonal();
    return (block_channel(channel.coeffs) * a * block_symbols(symbols.symbols)).squaredNorm();
}

inline double dense_weighted_energy(const std::vector<PathChannel>& channels, const PowerAllocation& alloc,
                                    const SymbolFrame& symbols, const WeightVector& w)
{
    double total = 0.0;
    for (std::size_t l = 0; l < channels.size(); ++l)
        total += w[l] * w[l] * dense_path_energy(channels[l], alloc, symbols);
    return total;
}

/// Unweighted GLRT from explicit least-squares fits. The known symbols are
/// removed with the dense inverse of diag(x_m) per column; each path's
/// signal component is then the projection of the stripped frame onto the
/// column space of its N x M coefficient matrix, with the projector built
/// from the pseudo-inverse formula. Returns ||Y||^2 / ||Y - sum_l S_l||^2.
inline double glrt_statistic_mle_oracle(const CMatrix& y, const PathSet& paths, const OfdmGrid& grid,
                                        const SymbolFrame& symbols)
{
    require(paths.size() < grid.n(), "number of paths must be below N");
    CMatrix stripped(y.rows(), y.cols());
    for (Eigen::Index j = 0; j < y.cols(); ++j) {
        const CMatrix xm = symbols.symbols.col(j).asDiagonal();
        stripped.col(j) = xm.inverse() * y.col(j);
    }
    CMatrix fitted = CMatrix::Zero(y.rows(), y.cols());
    for (const auto& p : paths.paths)
        fitted += dense_reference_projector(path_coeffs(p, grid).coeffs) * stripped;
    return stripped.squaredNorm() / (stripped - fitted).squaredNorm();
}

/// Dense projector matrices {P_1, ..., P_L, P_n} built from pseudo-inverses.
inline std::vector<CMatrix> dense_projectors(const PathSet& paths, const OfdmGrid& grid)
{
    const auto n = static_cast<Eigen::Index>(grid.n());
    std::vector<CMatrix> out;
    CMatrix noise = CMatrix::Identity(n, n);
    for (const auto& p : paths.paths) {
        out.push_back(dense_reference_projector(path_coeffs(p, grid).coeffs));
        noise -= out.back();
    }
    out.push_back(noise);
    return out;
}

} // namespace isacdet::reference
