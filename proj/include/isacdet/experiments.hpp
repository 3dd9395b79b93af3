// SPDX-License-Identifier: Apache-2.0
// ------------------------------------------------------------------------
// Experiment drivers behind the command-line tool: design variants, ROC,
// RCS-split sweep, delay-Doppler maps and the optimizer trace. Every
// command returns its CSV as a string so output can be compared byte for
// byte; numbers are formatted with std::to_chars (shortest round-trip,
// locale independent).

#pragma once

#include "channel.hpp"
#include "common.hpp"
#include "config.hpp"
#include "detector.hpp"
#include "optimizer.hpp"
#include "scene.hpp"
#include "waveform.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#ifndef ISACDET_VERSION
#define ISACDET_VERSION "0.0.0"
#endif

namespace isacdet {

inline constexpr const char* kVersion = ISACDET_VERSION;

// ------------------------------------------------------------------------
// Formatting and hashing

inline std::string format_number(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::string format_number(std::size_t v)
{
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::string format_number(int v)
{
    char buf[16];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

class CsvWriter {
  public:
    explicit CsvWriter(std::initializer_list<const char*> header)
    {
        bool first = true;
        for (const char* h : header) {
            if (!first)
                out_ += ',';
            out_ += h;
            first = false;
        }
        out_ += '\n';
    }

    template <typename... Fields>
    void row(const Fields&... fields)
    {
        bool first = true;
        ((append(fields, first)), ...);
        out_ += '\n';
    }

    const std::string& str() const { return out_; }

  private:
    void append(const std::string& s, bool& first) { sep(first), out_ += s; }
    void append(const char* s, bool& first) { sep(first), out_ += s; }
    void append(double v, bool& first) { sep(first), out_ += format_number(v); }
    void append(std::size_t v, bool& first) { sep(first), out_ += format_number(v); }
    void append(int v, bool& first) { sep(first), out_ += format_number(v); }

    void sep(bool& first)
    {
        if (!first)
            out_ += ',';
        first = false;
    }

    std::string out_;
};

/// FNV-1a, 64-bit.
inline std::uint64_t fnv1a64(const std::string& bytes)
{
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v)
{
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4)
        s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    return s;
}

namespace detail {

inline nlohmann::json complex_json(cplx z) { return nlohmann::json::array({z.real(), z.imag()}); }

} // namespace detail

/// Resolved configuration as JSON with sorted keys; the basis of the
/// config hash, so it covers every value a command can depend on.
inline nlohmann::json canonical_config(const ExperimentConfig& cfg)
{
    using nlohmann::json;
    json j;
    j["profile"] = cfg.profile;
    const auto& g = cfg.grid;
    j["grid"] = {{"n_subcarriers", g.n_subcarriers}, {"n_symbols", g.n_symbols},
                 {"subcarrier_spacing", g.subcarrier_spacing}, {"symbol_duration", g.symbol_duration},
                 {"carrier_freq", g.carrier_freq}, {"comm_noise_power", g.comm_noise_power},
                 {"radar_noise_power", g.radar_noise_power}, {"power_budget", g.power_budget},
                 {"comm_snr_target", g.comm_snr_target}};
    json scene;
    if (cfg.scene.from_geometry) {
        const auto& geo = cfg.scene.geometry;
        json refl = json::array();
        for (const auto& p : geo.reflector_positions)
            refl.push_back({p[0], p[1]});
        scene["geometry"] = {{"bs", {geo.bs_position[0], geo.bs_position[1]}},
                             {"reflectors", refl},
                             {"target", {geo.target_position[0], geo.target_position[1]}},
                             {"velocity", {geo.target_velocity[0], geo.target_velocity[1]}}};
        switch (cfg.scene.loss_model) {
        case PathLossModel::FreeSpace: scene["path_losses"] = "free-space"; break;
        case PathLossModel::Unit: scene["path_losses"] = "unit"; break;
        case PathLossModel::Explicit: {
            json pl = json::array();
            for (auto z : cfg.scene.path_losses)
                pl.push_back(detail::complex_json(z));
            scene["path_losses"] = pl;
            break;
        }
        }
    } else {
        json ps = json::array();
        for (const auto& p : cfg.scene.paths)
            ps.push_back({{"delay_tap", p.delay_tap}, {"doppler_tap", p.doppler_tap},
                          {"path_loss", detail::complex_json(p.path_loss)}});
        scene["paths"] = ps;
    }
    if (cfg.scene.gain_profile) {
        json rows = json::array();
        const auto& gp = *cfg.scene.gain_profile;
        for (Eigen::Index i = 0; i < gp.rows(); ++i) {
            json row = json::array();
            for (Eigen::Index l = 0; l < gp.cols(); ++l)
                row.push_back(gp(i, l));
            rows.push_back(row);
        }
        scene["gain_profile"] = rows;
    } else {
        scene["gain_profile"] = "flat";
    }
    j["scene"] = scene;
    j["rcs"] = {{"total_variance", cfg.rcs.total_variance},
                {"nlos_fraction", cfg.rcs.nlos_fraction},
                {"model", cfg.rcs.model == RcsModel::SwerlingI ? "swerling-i" : "per-subcarrier"}};
    json comm;
    comm["channel"] = cfg.comm.model == CommChannelModel::Flat       ? "flat"
                      : cfg.comm.model == CommChannelModel::Rayleigh ? "rayleigh"
                                                                     : "fixed";
    json values = json::array();
    for (auto z : cfg.comm.values)
        values.push_back(detail::complex_json(z));
    comm["values"] = values;
    j["comm"] = comm;
    json variants = json::array();
    for (auto v : cfg.run.variants)
        variants.push_back(to_string(v));
    j["run"] = {{"seed", cfg.run.seed},         {"n_trials", cfg.run.n_trials},
                {"null_trials", cfg.run.null_trials}, {"p_fa", cfg.run.p_fa},
                {"variants", variants},         {"sweep", cfg.run.sweep},
                {"sweep_p_fa", cfg.run.sweep_p_fa}, {"random_symbols", cfg.run.random_symbols}};
    j["map"] = {{"p_fa", cfg.map.p_fa}, {"null_frames", cfg.map.null_frames}, {"frame", cfg.map.frame}};
    return j;
}

inline std::string config_hash(const ExperimentConfig& cfg) { return hex64(fnv1a64(canonical_config(cfg).dump())); }

// ------------------------------------------------------------------------
// Scene and variant setup

/// Truth scene shared by all variants: paths with RCS assigned from the
/// config split, channel coefficients, SNR floors and the starting
/// allocation. The design uses unit symbols: the constellation is unit
/// modulus, so floors and path energies equal those of any drawn frame.
struct Setup {
    OfdmGrid grid;
    PathSet truth;
    std::vector<PathChannel> channels;
    SymbolFrame design_symbols;
    RVector bounds;
    PowerAllocation initial;
    std::optional<RMatrix> gain_profile;
    RcsModel rcs_model = RcsModel::SwerlingI;
    bool random_symbols = true;
};

inline PathSet scene_paths(const ExperimentConfig& cfg)
{
    PathSet paths;
    if (cfg.scene.from_geometry) {
        const auto routes = enumerate_routes(cfg.scene.geometry, cfg.grid.carrier_freq);
        std::vector<cplx> losses;
        switch (cfg.scene.loss_model) {
        case PathLossModel::FreeSpace: losses = free_space_path_losses(cfg.scene.geometry); break;
        case PathLossModel::Unit: losses.assign(routes.size(), cplx{1.0, 0.0}); break;
        case PathLossModel::Explicit: losses = cfg.scene.path_losses; break;
        }
        paths = taps_from_geometry(cfg.scene.geometry, cfg.grid, losses);
    } else {
        paths.paths = cfg.scene.paths;
        for (auto& p : paths.paths)
            p.rcs_variance = RVector::Zero(static_cast<Eigen::Index>(cfg.grid.n()));
    }
    assign_rcs_split(paths, cfg.grid.n(), cfg.rcs.total_variance, cfg.rcs.nlos_fraction);
    paths.validate(cfg.grid);
    return paths;
}

inline Setup build_setup(const ExperimentConfig& cfg)
{
    cfg.grid.validate();
    Setup s;
    s.grid = cfg.grid;
    s.truth = scene_paths(cfg);
    s.channels = path_channels(s.truth, s.grid);
    s.design_symbols = unit_symbols(s.grid);
    const CVector hc = comm_channel(cfg.comm.model, s.grid, TrialRng{cfg.run.seed}, cfg.comm.values);
    s.bounds = comm_lower_bounds(s.grid, hc, s.design_symbols);
    s.initial = initial_allocation(s.bounds, s.grid.power_budget);
    if (cfg.scene.gain_profile) {
        require(cfg.scene.gain_profile->rows() == static_cast<Eigen::Index>(s.grid.n()) &&
                    cfg.scene.gain_profile->cols() == static_cast<Eigen::Index>(s.truth.size()),
                "gain profile must be N x L for this scene");
        s.gain_profile = cfg.scene.gain_profile;
    }
    s.rcs_model = cfg.rcs.model;
    s.random_symbols = cfg.run.random_symbols;
    return s;
}

struct VariantDesign {
    Variant variant = Variant::None;
    ProjectorSet projectors;
    PowerAllocation alloc;
    WeightVector w;
};

inline JointProblem joint_problem(const Setup& s)
{
    return {s.channels, s.design_symbols, s.bounds, s.grid.power_budget, s.gain_profile};
}

/// joint: a and w jointly; transmit-only: a with equal w; detector-only:
/// w for the starting a; none: starting a, equal w; los-only: starting a,
/// single LoS projector with w = [1].
inline VariantDesign design_variant(const Setup& s, Variant v)
{
    VariantDesign d;
    d.variant = v;
    d.projectors = build_projectors(s.truth, s.grid);
    d.alloc = s.initial;
    d.w = WeightVector::equal(s.truth.size());
    switch (v) {
    case Variant::Joint: {
        const auto sol = joint_design(joint_problem(s), s.initial);
        d.alloc = sol.alloc;
        d.w = sol.w;
        break;
    }
    case Variant::TransmitOnly: {
        JointOptions opt;
        opt.optimize_weights = false;
        d.alloc = joint_design(joint_problem(s), s.initial, opt).alloc;
        break;
    }
    case Variant::DetectorOnly:
        d.w = update_weights(s.channels, s.initial, s.design_symbols, s.gain_profile);
        break;
    case Variant::None: break;
    case Variant::LosOnly: {
        PathSet los;
        los.paths.push_back(s.truth[0]);
        d.projectors = build_projectors(los, s.grid);
        d.w = WeightVector::equal(1);
        break;
    }
    }
    return d;
}

inline DetectionScenario scenario(const Setup& s, const PathSet& truth, const VariantDesign& d)
{
    return {s.grid, truth, s.channels, d.projectors, s.rcs_model, s.random_symbols};
}

/// Null trial count: the configured value, or enough for n * p >= 50 at
/// the smallest requested p_fa (never fewer than the H1 trial count).
inline std::size_t null_trial_count(const RunConfig& run, double min_p_fa)
{
    if (run.null_trials > 0)
        return run.null_trials;
    return std::max(run.n_trials, static_cast<std::size_t>(std::ceil(50.0 / min_p_fa - 1e-9)));
}

// ------------------------------------------------------------------------
// Commands

inline std::string cmd_roc(const ExperimentConfig& cfg, std::size_t workers = 1)
{
    const Setup s = build_setup(cfg);
    const TrialRng rng{cfg.run.seed};
    std::vector<double> p_fa = cfg.run.p_fa;
    std::sort(p_fa.begin(), p_fa.end());
    const std::size_t n_null = null_trial_count(cfg.run, p_fa.front());
    for (double p : p_fa)
        check_quantile_estimable(p, n_null);

    CsvWriter csv{"variant", "p_fa", "p_d", "halfwidth", "threshold", "p_fa_empirical", "n_trials"};
    for (Variant v : cfg.run.variants) {
        const VariantDesign d = design_variant(s, v);
        const NullDistribution null = simulate_null(d.projectors, d.w, s.grid, n_null, rng, workers);
        const auto h1 = simulate_h1(scenario(s, s.truth, d), d.alloc, d.w, cfg.run.n_trials, rng, workers);
        for (double p : p_fa) {
            const auto r = detection_report(null.threshold(p), h1, &null, p);
            csv.row(to_string(v), p, r.p_d_empirical, r.confidence_halfwidth, r.threshold, r.p_fa_empirical,
                    r.n_trials);
        }
    }
    return csv.str();
}

inline std::string cmd_rcs_sweep(const ExperimentConfig& cfg, std::size_t workers = 1)
{
    const Setup s = build_setup(cfg);
    const TrialRng rng{cfg.run.seed};
    const double p = cfg.run.sweep_p_fa;
    const std::size_t n_null = null_trial_count(cfg.run, p);
    check_quantile_estimable(p, n_null);

    // Designs and thresholds do not depend on the RCS split.
    std::vector<VariantDesign> designs;
    std::vector<double> thresholds;
    for (Variant v : cfg.run.variants) {
        designs.push_back(design_variant(s, v));
        thresholds.push_back(
            simulate_null(designs.back().projectors, designs.back().w, s.grid, n_null, rng, workers).threshold(p));
    }

    CsvWriter csv{"nlos_fraction", "variant", "p_d", "halfwidth", "threshold", "n_trials"};
    for (double f : cfg.run.sweep) {
        PathSet truth = s.truth;
        assign_rcs_split(truth, s.grid.n(), cfg.rcs.total_variance, f);
        for (std::size_t i = 0; i < designs.size(); ++i) {
            const auto h1 = simulate_h1(scenario(s, truth, designs[i]), designs[i].alloc, designs[i].w,
                                        cfg.run.n_trials, rng, workers);
            const auto r = detection_report(thresholds[i], h1, nullptr, p);
            csv.row(f, to_string(designs[i].variant), r.p_d_empirical, r.confidence_halfwidth, r.threshold,
                    r.n_trials);
        }
    }
    return csv.str();
}

/// Combined-mode template weights: expected per-path echo amplitude
/// |beta_l| * sqrt(mean_n sigma^2_{n,l}), normalized; equal if all vanish.
inline WeightVector template_weights(const PathSet& paths)
{
    RVector d(static_cast<Eigen::Index>(paths.size()));
    for (std::size_t l = 0; l < paths.size(); ++l)
        d(static_cast<Eigen::Index>(l)) = std::abs(paths[l].path_loss) * std::sqrt(paths[l].rcs_variance.mean());
    return d.norm() > 0 ? WeightVector::normalized(d) : WeightVector::equal(paths.size());
}

/// Per-bin null frame count giving at least 50 pooled exceedances.
inline std::size_t map_null_frames(const MapConfig& map, std::size_t bins)
{
    if (map.null_frames > 0)
        return map.null_frames;
    const double needed = 50.0 / (map.p_fa * static_cast<double>(bins));
    return std::max<std::size_t>(100, static_cast<std::size_t>(std::ceil(needed - 1e-9)));
}

/// Symbol-stripped H1 frame of the given trial, echo from the truth scene
/// at the starting allocation.
inline CMatrix map_frame(const Setup& s, const TrialRng& rng, std::uint64_t trial)
{
    SymbolFrame symbols;
    if (s.random_symbols) {
        auto st = rng.stream(StreamTag::Symbols, trial);
        symbols = draw_symbols(s.grid, st);
    } else {
        symbols = unit_symbols(s.grid);
    }
    const EchoFrame f = synthesize_echo(s.grid, s.truth, s.channels, s.initial, symbols, Hypothesis::H1,
                                        s.rcs_model, rng, trial);
    return remove_symbols(f.y, symbols);
}

inline std::string cmd_ddmap(const ExperimentConfig& cfg, std::size_t workers = 1,
                             const std::optional<std::filesystem::path>& dump = std::nullopt)
{
    const Setup s = build_setup(cfg);
    const TrialRng rng{cfg.run.seed};
    const CMatrix frame = map_frame(s, rng, cfg.map.frame);
    if (dump) {
        std::ofstream os(*dump, std::ios::binary);
        require(static_cast<bool>(os), "cannot write frame dump " + dump->string());
        write_frame_dump(os, frame, static_cast<std::uint32_t>(s.truth.size()));
    }

    const TapRange range = TapRange::full(s.grid);
    CsvWriter csv{"mode", "delay_tap", "doppler_tap", "value", "threshold", "above"};
    for (MapMode mode : {MapMode::SinglePath, MapMode::Combined}) {
        const DelayDopplerMapper mapper(s.grid, mode, template_offsets(s.truth, s.grid), template_weights(s.truth),
                                        range);
        const std::size_t bins = static_cast<std::size_t>(mapper.delay_bins() * mapper.doppler_bins());
        const std::size_t frames = map_null_frames(cfg.map, bins);
        check_quantile_estimable(cfg.map.p_fa, frames * bins);
        const double thr = mapper.simulate_null(frames, rng, workers).threshold(cfg.map.p_fa);
        const RMatrix m = mapper(frame);
        const char* name = mode == MapMode::SinglePath ? "single-path" : "combined";
        for (int k = range.delay_begin; k < range.delay_end; ++k)
            for (int r = range.doppler_begin; r < range.doppler_end; ++r) {
                const double v = m(k - range.delay_begin, r - range.doppler_begin);
                csv.row(name, k, r, v, thr, v > thr ? 1 : 0);
            }
    }
    return csv.str();
}

inline std::string cmd_optimize(const ExperimentConfig& cfg)
{
    const Setup s = build_setup(cfg);
    const JointProblem problem = joint_problem(s);
    const JointSolution sol = joint_design(problem, s.initial);
    const RMatrix energy = path_energy_matrix(s.channels, s.design_symbols, s.gain_profile);

    CsvWriter csv{"kind", "index", "value"};
    csv.row("objective", std::size_t{0},
            design_objective(energy, s.initial.gains, WeightVector::equal(s.truth.size())));
    for (std::size_t i = 0; i < sol.objective_trace.size(); ++i)
        csv.row("objective", i + 1, sol.objective_trace[i]);
    csv.row("converged", std::size_t{0}, sol.converged ? 1 : 0);
    csv.row("power", std::size_t{0}, sol.alloc.power());
    for (Eigen::Index i = 0; i < sol.alloc.gains.size(); ++i)
        csv.row("a", static_cast<std::size_t>(i), sol.alloc.gains(i));
    for (std::size_t l = 0; l < sol.w.size(); ++l)
        csv.row("w", l, sol.w[l]);
    return csv.str();
}

// ------------------------------------------------------------------------
// Run manifest

inline nlohmann::json run_manifest(const ExperimentConfig& cfg, const std::string& command,
                                   const std::vector<std::string>& outputs)
{
    return {{"tool", "isacdet"},
            {"version", kVersion},
            {"command", command},
            {"profile", cfg.profile},
            {"seed", cfg.run.seed},
            {"n_trials", cfg.run.n_trials},
            {"config_hash", "fnv1a64:" + config_hash(cfg)},
            {"config", canonical_config(cfg)},
            {"outputs", outputs}};
}

/// Adds (or replaces) one command's entry in an output directory's
/// manifest, so several commands can share a directory.
inline nlohmann::json merge_manifest(const std::filesystem::path& path, const nlohmann::json& entry)
{
    nlohmann::json doc;
    if (std::ifstream in(path, std::ios::binary); in) {
        doc = nlohmann::json::parse(in, nullptr, false);
        if (doc.is_discarded() || !doc.is_object() || !doc.contains("runs") || !doc["runs"].is_object())
            doc = nlohmann::json();
    }
    if (doc.is_null())
        doc = {{"tool", "isacdet"}, {"runs", nlohmann::json::object()}};
    doc["version"] = kVersion;
    doc["runs"][entry.at("command").get<std::string>()] = entry;
    return doc;
}

inline void write_text(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream os(path, std::ios::binary);
    require(static_cast<bool>(os), "cannot write " + path.string());
    os << text;
    require(static_cast<bool>(os), "failed writing " + path.string());
}

} // namespace isacdet
