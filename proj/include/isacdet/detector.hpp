// SPDX-License-Identifier: Apache-2.0
// ------------------------------------------------------------------------
// Weighted GLRT detector, Monte Carlo threshold calibration, detection
// probability estimation, and delay-Doppler maps.

#pragma once

#include "channel.hpp"
#include "common.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "scene.hpp"
#include "waveform.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

namespace isacdet {

/// Non-negative per-path detector weights with sum w_l^2 = 1.
class WeightVector {
  public:
    static constexpr double kNormTolerance = 1e-12;

    WeightVector() = default;

    explicit WeightVector(RVector w) : w_(std::move(w))
    {
        require(w_.size() >= 1, "weight vector must be nonempty");
        require((w_.array() >= 0.0).all(), "weights must be non-negative");
        require(std::abs(w_.squaredNorm() - 1.0) <= kNormTolerance, "weights must have unit norm");
    }

    static WeightVector normalized(const RVector& d)
    {
        const double norm = d.norm();
        require(norm > 0, "cannot normalize a zero weight vector");
        return WeightVector(d / norm);
    }

    static WeightVector equal(std::size_t count)
    {
        require(count >= 1, "weight vector must be nonempty");
        return WeightVector(RVector::Constant(static_cast<Eigen::Index>(count),
                                              1.0 / std::sqrt(static_cast<double>(count))));
    }

    std::size_t size() const { return static_cast<std::size_t>(w_.size()); }
    const RVector& values() const { return w_; }
    double operator[](std::size_t l) const { return w_(static_cast<Eigen::Index>(l)); }

  private:
    RVector w_;
};

/// 1 + sum_l w_l^2 ||P_l Y||^2 / ||P_n Y||^2.
inline double glrt_statistic(const CMatrix& y, const ProjectorSet& projectors, const WeightVector& w)
{
    require(y.rows() == projectors.dimension(), "frame rows must match the projector dimension");
    require(w.size() == projectors.size(), "one weight per path is required");
    const double noise = projectors.noise_energy(y);
    if (!(noise >= 1e-300))
        throw Error(ErrorKind::DegenerateDenominator, "frame lies in the signal subspace");
    const RVector signal = projectors.signal_energies(y);
    return 1.0 + w.values().cwiseAbs2().dot(signal) / noise;
}

inline double glrt_statistic(const EchoFrame& frame, const ProjectorSet& projectors, const WeightVector& w)
{
    return glrt_statistic(frame.y, projectors, w);
}

/// Two-sided 95% Wilson score interval halfwidth for k successes in n.
inline double wilson_halfwidth(double p_hat, std::size_t n, double z = 1.959963984540054)
{
    if (n == 0)
        return 1.0;
    const double nn = static_cast<double>(n);
    const double z2 = z * z;
    return z * std::sqrt(p_hat * (1 - p_hat) / nn + z2 / (4 * nn * nn)) / (1 + z2 / nn);
}

/// Sorted null (H0) statistics for one (projectors, weights) configuration.
class NullDistribution {
  public:
    explicit NullDistribution(std::vector<double> samples) : sorted_(std::move(samples))
    {
        require(!sorted_.empty(), "null distribution needs samples");
        std::sort(sorted_.begin(), sorted_.end());
    }

    std::size_t size() const { return sorted_.size(); }
    const std::vector<double>& sorted() const { return sorted_; }

    /// 1-based order-statistic rank ceil((1 - p_fa) n), no interpolation.
    std::size_t rank(double p_fa) const
    {
        const double n = static_cast<double>(sorted_.size());
        // The small offset keeps e.g. (1 - 0.1) * 1e4 from rounding up to 9001.
        const double raw = std::ceil((1.0 - p_fa) * n - 1e-9);
        return static_cast<std::size_t>(std::clamp(raw, 0.0, n));
    }

    double threshold(double p_fa) const
    {
        require(p_fa > 0 && p_fa <= 1, "p_fa must lie in (0, 1]");
        const std::size_t r = rank(p_fa);
        return sorted_[r == 0 ? 0 : r - 1];
    }

    /// Fraction of null samples strictly above the threshold.
    double exceedance(double threshold) const
    {
        const auto it = std::upper_bound(sorted_.begin(), sorted_.end(), threshold);
        return static_cast<double>(sorted_.end() - it) / static_cast<double>(sorted_.size());
    }

  private:
    std::vector<double> sorted_;
};

/// Null statistics from unit-variance white noise. The statistic is scale
/// invariant, so the noise power does not enter: the threshold depends on
/// the projector geometry, the weights and the frame shape only.
inline NullDistribution simulate_null(const ProjectorSet& projectors, const WeightVector& w,
                                      const OfdmGrid& grid, std::size_t n_trials, const TrialRng& rng,
                                      std::size_t workers = 1)
{
    require(n_trials >= 1, "need at least one null trial");
    const Eigen::Index rows = projectors.dimension();
    require(rows > 0 && static_cast<Eigen::Index>(grid.size()) % rows == 0,
            "projector dimension must divide the frame size");
    const Eigen::Index cols = static_cast<Eigen::Index>(grid.size()) / rows;
    std::vector<double> stats(n_trials);
    parallel_for(n_trials, workers, [&](std::size_t t) {
        auto s = rng.stream(StreamTag::NullNoise, t);
        CMatrix z(rows, cols);
        for (Eigen::Index j = 0; j < cols; ++j)
            for (Eigen::Index i = 0; i < rows; ++i)
                z(i, j) = s.complex_normal(1.0);
        stats[t] = glrt_statistic(z, projectors, w);
    });
    return NullDistribution(std::move(stats));
}

inline void check_quantile_estimable(double p_fa, std::size_t n_trials)
{
    require(p_fa > 0 && p_fa <= 1, "p_fa must lie in (0, 1]");
    if (static_cast<double>(n_trials) * p_fa < 50.0)
        throw Error(ErrorKind::InsufficientTrials,
                    std::to_string(n_trials) + " trials cannot resolve p_fa = " + std::to_string(p_fa) +
                        " (need n_trials * p_fa >= 50)");
}

inline double calibrate_threshold(const ProjectorSet& projectors, const WeightVector& w, const OfdmGrid& grid,
                                  double p_fa, std::size_t n_trials, const TrialRng& rng,
                                  std::size_t workers = 1)
{
    check_quantile_estimable(p_fa, n_trials);
    return simulate_null(projectors, w, grid, n_trials, rng, workers).threshold(p_fa);
}

struct DetectionReport {
    double threshold = 1.0;
    double p_fa_target = std::numeric_limits<double>::quiet_NaN();
    double p_fa_empirical = std::numeric_limits<double>::quiet_NaN();
    double p_d_empirical = 0.0;
    std::size_t n_trials = 0;
    double confidence_halfwidth = 1.0;
};

/// Everything needed to simulate H1 frames for one detector variant: the
/// true multipath scene that produces the echo and the projector set the
/// detector uses (which may cover only some of the true paths).
struct DetectionScenario {
    OfdmGrid grid;
    PathSet truth;
    std::vector<PathChannel> channels;
    ProjectorSet detector;
    RcsModel rcs_model = RcsModel::SwerlingI;
    bool random_symbols = true;
};

/// One H1 statistic for trial t; the receiver strips the known symbols.
inline double h1_statistic(const DetectionScenario& sc, const PowerAllocation& alloc, const WeightVector& w,
                           const TrialRng& rng, std::uint64_t trial)
{
    SymbolFrame symbols;
    if (sc.random_symbols) {
        auto s = rng.stream(StreamTag::Symbols, trial);
        symbols = draw_symbols(sc.grid, s);
    } else {
        symbols = unit_symbols(sc.grid);
    }
    const EchoFrame frame = synthesize_echo(sc.grid, sc.truth, sc.channels, alloc, symbols, Hypothesis::H1,
                                            sc.rcs_model, rng, trial);
    return glrt_statistic(remove_symbols(frame.y, symbols), sc.detector, w);
}

/// H1 statistics for trials 0..n-1 with fresh RCS, noise and symbols per
/// trial. Trials are keyed by index, so equal seeds pair variants trial by
/// trial.
inline std::vector<double> simulate_h1(const DetectionScenario& sc, const PowerAllocation& alloc,
                                       const WeightVector& w, std::size_t n_trials, const TrialRng& rng,
                                       std::size_t workers = 1)
{
    require(n_trials >= 1, "need at least one trial");
    std::vector<double> stats(n_trials);
    parallel_for(n_trials, workers, [&](std::size_t t) { stats[t] = h1_statistic(sc, alloc, w, rng, t); });
    return stats;
}

/// Exceedance report for precomputed H1 statistics.
inline DetectionReport detection_report(double threshold, const std::vector<double>& h1_stats,
                                        const NullDistribution* null = nullptr,
                                        double p_fa_target = std::numeric_limits<double>::quiet_NaN())
{
    require(threshold > 1.0, "threshold must exceed 1");
    require(!h1_stats.empty(), "need at least one trial");
    const auto hits = static_cast<std::size_t>(
        std::count_if(h1_stats.begin(), h1_stats.end(), [&](double s) { return s > threshold; }));
    DetectionReport r;
    r.threshold = threshold;
    r.n_trials = h1_stats.size();
    r.p_d_empirical = static_cast<double>(hits) / static_cast<double>(r.n_trials);
    r.confidence_halfwidth = wilson_halfwidth(r.p_d_empirical, r.n_trials);
    r.p_fa_target = p_fa_target;
    if (null != nullptr)
        r.p_fa_empirical = null->exceedance(threshold);
    return r;
}

inline DetectionReport estimate_pd(double threshold, const DetectionScenario& sc, const PowerAllocation& alloc,
                                   const WeightVector& w, std::size_t n_trials, const TrialRng& rng,
                                   std::size_t workers = 1, const NullDistribution* null = nullptr,
                                   double p_fa_target = std::numeric_limits<double>::quiet_NaN())
{
    require(threshold > 1.0, "threshold must exceed 1");
    return detection_report(threshold, simulate_h1(sc, alloc, w, n_trials, rng, workers), null, p_fa_target);
}

// ------------------------------------------------------------------------
// Delay-Doppler maps

enum class MapMode {
    SinglePath, // L = 1 hypothesis per bin
    Combined,   // the bin is the LoS bin of a known multipath template
};

struct TapOffset {
    int delay = 0;
    int doppler = 0;
};

struct TapRange {
    int delay_begin = 0, delay_end = 0;     // [begin, end)
    int doppler_begin = 0, doppler_end = 0; // [begin, end)

    static TapRange full(const OfdmGrid& g)
    {
        return {0, static_cast<int>(g.n()), 0, static_cast<int>(g.m())};
    }
};

/// Tap offsets of every path relative to the first (LoS) path.
inline std::vector<TapOffset> template_offsets(const PathSet& paths, const OfdmGrid& grid)
{
    require(!paths.empty(), "template needs at least one path");
    std::vector<TapOffset> out;
    const auto& los = paths[0];
    for (const auto& p : paths.paths)
        out.push_back({wrap_tap(p.delay_tap - los.delay_tap, grid.n()),
                       wrap_tap(p.doppler_tap - los.doppler_tap, grid.m())});
    return out;
}

/// Scans candidate bins with the weighted statistic on the vectorized
/// frame. Each bin's hypothesis uses frame-level bin signatures (which
/// resolve delay as well as Doppler); in combined mode the candidate bin is
/// expanded to the full template and weighted by `weights`.
class DelayDopplerMapper {
  public:
    DelayDopplerMapper(const OfdmGrid& grid, MapMode mode, std::vector<TapOffset> offsets, WeightVector weights,
                       TapRange range)
        : grid_(grid), mode_(mode), range_(range)
    {
        require(range.delay_begin >= 0 && range.delay_end <= static_cast<int>(grid.n()) &&
                    range.delay_begin < range.delay_end,
                "delay range out of bounds");
        require(range.doppler_begin >= 0 && range.doppler_end <= static_cast<int>(grid.m()) &&
                    range.doppler_begin < range.doppler_end,
                "Doppler range out of bounds");
        if (mode == MapMode::SinglePath) {
            offsets_ = {TapOffset{}};
            weights_ = WeightVector::equal(1);
        } else {
            require(!offsets.empty(), "combined mode needs a template");
            require(weights.size() == offsets.size(), "one weight per template path is required");
            offsets_ = std::move(offsets);
            weights_ = std::move(weights);
        }
        for (int k = range.delay_begin; k < range.delay_end; ++k) {
            for (int r = range.doppler_begin; r < range.doppler_end; ++r) {
                CMatrix s(static_cast<Eigen::Index>(grid.size()), static_cast<Eigen::Index>(offsets_.size()));
                for (std::size_t l = 0; l < offsets_.size(); ++l)
                    s.col(static_cast<Eigen::Index>(l)) =
                        bin_signature(wrap_tap(k + offsets_[l].delay, grid.n()),
                                      wrap_tap(r + offsets_[l].doppler, grid.m()), grid);
                bins_.emplace_back(std::move(s));
            }
        }
    }

    MapMode mode() const { return mode_; }
    const TapRange& range() const { return range_; }
    const WeightVector& weights() const { return weights_; }
    int delay_bins() const { return range_.delay_end - range_.delay_begin; }
    int doppler_bins() const { return range_.doppler_end - range_.doppler_begin; }

    const ProjectorSet& projectors(int k, int r) const
    {
        return bins_[static_cast<std::size_t>((k - range_.delay_begin) * doppler_bins() +
                                              (r - range_.doppler_begin))];
    }

    /// Statistic per bin; rows index delay taps, columns Doppler taps.
    RMatrix operator()(const CMatrix& frame) const
    {
        require(frame.rows() == static_cast<Eigen::Index>(grid_.n()) &&
                    frame.cols() == static_cast<Eigen::Index>(grid_.m()),
                "frame must be N x M");
        const CMatrix v = Eigen::Map<const CMatrix>(frame.data(), frame.size(), 1);
        RMatrix out(delay_bins(), doppler_bins());
        for (int k = range_.delay_begin; k < range_.delay_end; ++k)
            for (int r = range_.doppler_begin; r < range_.doppler_end; ++r)
                out(k - range_.delay_begin, r - range_.doppler_begin) =
                    glrt_statistic(v, projectors(k, r), weights_);
        return out;
    }

    /// Per-bin null distribution from noise-only frames, pooling all bins
    /// (each bin has the same marginal null law).
    NullDistribution simulate_null(std::size_t n_frames, const TrialRng& rng, std::size_t workers = 1) const
    {
        std::vector<RMatrix> maps(n_frames);
        parallel_for(n_frames, workers, [&](std::size_t t) {
            auto s = rng.stream(StreamTag::NullNoise, t);
            maps[t] = (*this)(draw_noise(grid_, 1.0, s));
        });
        std::vector<double> pooled;
        pooled.reserve(n_frames * static_cast<std::size_t>(delay_bins() * doppler_bins()));
        for (const auto& m : maps)
            pooled.insert(pooled.end(), m.data(), m.data() + m.size());
        return NullDistribution(std::move(pooled));
    }

  private:
    OfdmGrid grid_;
    MapMode mode_;
    TapRange range_;
    std::vector<TapOffset> offsets_;
    WeightVector weights_;
    std::vector<ProjectorSet> bins_;
};

inline RMatrix delay_doppler_map(const CMatrix& frame, const OfdmGrid& grid, MapMode mode,
                                 const std::vector<TapOffset>& offsets, const WeightVector& weights,
                                 const TapRange& range)
{
    return DelayDopplerMapper(grid, mode, offsets, weights, range)(frame);
}

/// Bins (delay, Doppler) with map value strictly above the threshold.
inline std::vector<std::pair<int, int>> bins_above(const RMatrix& map, const TapRange& range, double threshold)
{
    std::vector<std::pair<int, int>> out;
    for (Eigen::Index i = 0; i < map.rows(); ++i)
        for (Eigen::Index j = 0; j < map.cols(); ++j)
            if (map(i, j) > threshold)
                out.emplace_back(range.delay_begin + static_cast<int>(i), range.doppler_begin + static_cast<int>(j));
    return out;
}

} // namespace isacdet
