// SPDX-License-Identifier: Apache-2.0
// ------------------------------------------------------------------------
// Experiment configuration: YAML schema, profiles and validation.
//
// Top-level blocks: grid, scene, rcs, comm, run, map (optional) and
// profiles (optional). A profile is a partial document with the same
// blocks; the selected one is merged over the base before parsing.
// Quantities may carry a unit suffix (e.g. power_budget_w or
// power_budget_dbm, comm_snr_target or comm_snr_target_db); at most one
// spelling may appear. Unknown keys are rejected with their position.
// See README.md for the full schema.

#pragma once

#include "common.hpp"
#include "scene.hpp"
#include "waveform.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace isacdet {

enum class Variant { Joint, TransmitOnly, DetectorOnly, None, LosOnly };

inline const char* to_string(Variant v)
{
    switch (v) {
    case Variant::Joint: return "joint";
    case Variant::TransmitOnly: return "transmit-only";
    case Variant::DetectorOnly: return "detector-only";
    case Variant::None: return "none";
    case Variant::LosOnly: return "los-only";
    }
    return "?";
}

inline std::optional<Variant> parse_variant(const std::string& s)
{
    for (Variant v : {Variant::Joint, Variant::TransmitOnly, Variant::DetectorOnly, Variant::None, Variant::LosOnly})
        if (s == to_string(v))
            return v;
    return std::nullopt;
}

enum class PathLossModel { FreeSpace, Unit, Explicit };

struct SceneConfig {
    bool from_geometry = true;
    Geometry geometry = Geometry::table_one();
    PathLossModel loss_model = PathLossModel::FreeSpace;
    std::vector<cplx> path_losses; // explicit model, route order
    std::vector<Path> paths;       // used when from_geometry is false
    std::optional<RMatrix> gain_profile; // N x L, optimizer only
};

struct RcsConfig {
    double total_variance = 1.0;
    double nlos_fraction = 0.5;
    RcsModel model = RcsModel::SwerlingI;
};

struct CommConfig {
    CommChannelModel model = CommChannelModel::Flat;
    std::vector<cplx> values; // fixed model, one per subcarrier
};

struct RunConfig {
    std::uint64_t seed = 1;
    std::size_t n_trials = 10000;
    std::size_t null_trials = 0; // 0: max(n_trials, ceil(50 / min p_fa))
    std::vector<double> p_fa{1e-3, 1e-2, 1e-1, 1.0};
    std::vector<Variant> variants{Variant::Joint, Variant::TransmitOnly, Variant::DetectorOnly, Variant::None,
                                  Variant::LosOnly};
    std::vector<double> sweep{0.1, 0.3, 0.5, 0.7, 0.9};
    double sweep_p_fa = 1e-3;
    bool random_symbols = true;
};

struct MapConfig {
    double p_fa = 1e-3;         // per-bin false-alarm rate
    std::size_t null_frames = 0; // 0: enough for 50 exceedances per bin pool
    std::uint64_t frame = 0;     // trial index of the displayed frame
};

struct ExperimentConfig {
    std::string profile = "desk";
    OfdmGrid grid = OfdmGrid::make(16, 16, 120e3, 5e9);
    SceneConfig scene;
    RcsConfig rcs;
    CommConfig comm;
    RunConfig run;
    MapConfig map;
};

// ------------------------------------------------------------------------

namespace config_detail {

class Reader {
  public:
    explicit Reader(std::string source) : source_(std::move(source)) {}

    [[noreturn]] void fail(const YAML::Node& node, const std::string& msg) const
    {
        std::ostringstream os;
        os << source_;
        if (node.IsDefined() && node.Mark().line >= 0)
            os << ':' << node.Mark().line + 1 << ':' << node.Mark().column + 1;
        os << ": " << msg;
        throw Error(ErrorKind::Config, os.str());
    }

    [[noreturn]] void fail_block(const std::string& msg) const
    {
        throw Error(ErrorKind::Config, source_ + ": " + msg);
    }

    void expect_map(const YAML::Node& node, const std::string& what) const
    {
        if (!node.IsMap())
            fail(node, "'" + what + "' must be a mapping");
    }

    void check_keys(const YAML::Node& node, const std::string& block, const std::set<std::string>& allowed) const
    {
        for (const auto& kv : node) {
            const auto key = kv.first.as<std::string>();
            if (!allowed.count(key))
                fail(kv.first, "unknown key '" + key + "' in block '" + block + "'");
        }
    }

    template <typename T>
    T scalar(const YAML::Node& node, const std::string& what) const
    {
        if (!node.IsScalar())
            fail(node, "'" + what + "' must be a scalar");
        try {
            return node.as<T>();
        } catch (const YAML::Exception&) {
            fail(node, "'" + what + "' has an invalid value '" + node.Scalar() + "'");
        }
    }

    double number(const YAML::Node& node, const std::string& what) const { return scalar<double>(node, what); }

    double positive(const YAML::Node& node, const std::string& what) const
    {
        const double v = number(node, what);
        if (!(v > 0))
            fail(node, "'" + what + "' must be positive");
        return v;
    }

    cplx complex_value(const YAML::Node& node, const std::string& what) const
    {
        if (node.IsScalar())
            return {number(node, what), 0.0};
        if (node.IsSequence() && node.size() == 2)
            return {number(node[0], what), number(node[1], what)};
        fail(node, "'" + what + "' must be a number or a [re, im] pair");
    }

    Point2 point(const YAML::Node& node, const std::string& what) const
    {
        if (!node.IsSequence() || node.size() != 2)
            fail(node, "'" + what + "' must be a 2-element list");
        return {number(node[0], what), number(node[1], what)};
    }

    std::vector<double> numbers(const YAML::Node& node, const std::string& what) const
    {
        if (!node.IsSequence())
            fail(node, "'" + what + "' must be a list");
        std::vector<double> out;
        for (const auto& item : node)
            out.push_back(number(item, what));
        return out;
    }

    /// Power-like quantity under one of base, base_w, base_dbm, base_dbw.
    std::optional<double> power(const YAML::Node& block, const std::string& base) const
    {
        return with_units(block, base,
                          {{"", [](double v) { return v; }},
                           {"_w", [](double v) { return v; }},
                           {"_dbm", [](double v) { return dbm_to_watts(v); }},
                           {"_dbw", [](double v) { return db_to_linear(v); }}});
    }

    /// Dimensionless ratio under base or base_db.
    std::optional<double> ratio(const YAML::Node& block, const std::string& base) const
    {
        return with_units(block, base,
                          {{"", [](double v) { return v; }}, {"_db", [](double v) { return db_to_linear(v); }}});
    }

    std::optional<double> frequency(const YAML::Node& block, const std::string& base) const
    {
        return with_units(block, base,
                          {{"", [](double v) { return v; }},
                           {"_hz", [](double v) { return v; }},
                           {"_khz", [](double v) { return v * 1e3; }},
                           {"_mhz", [](double v) { return v * 1e6; }},
                           {"_ghz", [](double v) { return v * 1e9; }}});
    }

    static std::set<std::string> spellings(const std::string& base, std::initializer_list<const char*> suffixes)
    {
        std::set<std::string> out;
        for (const char* s : suffixes)
            out.insert(base + s);
        return out;
    }

  private:
    using Convert = double (*)(double);

    std::optional<double> with_units(const YAML::Node& block, const std::string& base,
                                     std::initializer_list<std::pair<const char*, Convert>> units) const
    {
        std::optional<double> value;
        std::string seen;
        for (const auto& [suffix, convert] : units) {
            const std::string key = base + suffix;
            const YAML::Node node = block[key];
            if (!node)
                continue;
            if (value)
                fail(node, "'" + key + "' conflicts with '" + seen + "'");
            value = convert(number(node, key));
            seen = key;
        }
        return value;
    }

    std::string source_;
};

/// Deep merge of mappings; scalars and sequences in `over` replace `base`.
inline YAML::Node merge(const YAML::Node& base, const YAML::Node& over)
{
    if (!base.IsMap() || !over.IsMap())
        return YAML::Clone(over);
    YAML::Node out = YAML::Clone(base);
    for (const auto& kv : over) {
        const auto key = kv.first.as<std::string>();
        out[key] = out[key] ? merge(out[key], kv.second) : YAML::Clone(kv.second);
    }
    return out;
}

inline void parse_grid(const Reader& rd, const YAML::Node& node, OfdmGrid& grid)
{
    rd.expect_map(node, "grid");
    std::set<std::string> allowed{"n_subcarriers", "n_symbols"};
    for (const auto& s : {Reader::spellings("subcarrier_spacing", {"", "_hz", "_khz", "_mhz", "_ghz"}),
                          Reader::spellings("carrier_freq", {"", "_hz", "_khz", "_mhz", "_ghz"}),
                          Reader::spellings("comm_noise_power", {"", "_w", "_dbm", "_dbw"}),
                          Reader::spellings("radar_noise_power", {"", "_w", "_dbm", "_dbw"}),
                          Reader::spellings("power_budget", {"", "_w", "_dbm", "_dbw"}),
                          Reader::spellings("comm_snr_target", {"", "_db"})})
        allowed.insert(s.begin(), s.end());
    rd.check_keys(node, "grid", allowed);

    if (node["n_subcarriers"])
        grid.n_subcarriers = rd.scalar<std::size_t>(node["n_subcarriers"], "n_subcarriers");
    if (node["n_symbols"])
        grid.n_symbols = rd.scalar<std::size_t>(node["n_symbols"], "n_symbols");
    if (auto v = rd.frequency(node, "subcarrier_spacing")) {
        grid.subcarrier_spacing = *v;
        grid.symbol_duration = 1.0 / *v;
    }
    if (auto v = rd.frequency(node, "carrier_freq"))
        grid.carrier_freq = *v;
    if (auto v = rd.power(node, "comm_noise_power"))
        grid.comm_noise_power = *v;
    if (auto v = rd.power(node, "radar_noise_power"))
        grid.radar_noise_power = *v;
    if (auto v = rd.power(node, "power_budget"))
        grid.power_budget = *v;
    if (auto v = rd.ratio(node, "comm_snr_target"))
        grid.comm_snr_target = *v;
    try {
        grid.validate();
    } catch (const Error& e) {
        rd.fail(node, std::string("invalid grid: ") + e.what());
    }
}

inline void parse_scene(const Reader& rd, const YAML::Node& node, SceneConfig& scene)
{
    rd.expect_map(node, "scene");
    rd.check_keys(node, "scene", {"geometry", "path_losses", "paths", "gain_profile"});
    if (node["geometry"] && node["paths"])
        rd.fail(node["paths"], "'scene' takes either 'geometry' or 'paths', not both");

    if (const auto g = node["geometry"]) {
        rd.expect_map(g, "geometry");
        rd.check_keys(g, "geometry", {"bs", "reflectors", "target", "velocity"});
        scene.from_geometry = true;
        if (g["bs"])
            scene.geometry.bs_position = rd.point(g["bs"], "bs");
        if (g["reflectors"]) {
            if (!g["reflectors"].IsSequence())
                rd.fail(g["reflectors"], "'reflectors' must be a list of points");
            scene.geometry.reflector_positions.clear();
            for (const auto& p : g["reflectors"])
                scene.geometry.reflector_positions.push_back(rd.point(p, "reflectors"));
        }
        if (g["target"])
            scene.geometry.target_position = rd.point(g["target"], "target");
        if (g["velocity"])
            scene.geometry.target_velocity = rd.point(g["velocity"], "velocity");
        try {
            scene.geometry.validate();
        } catch (const Error& e) {
            rd.fail(g, e.what());
        }
    }

    if (const auto pl = node["path_losses"]) {
        if (pl.IsScalar()) {
            const auto s = pl.as<std::string>();
            if (s == "free-space")
                scene.loss_model = PathLossModel::FreeSpace;
            else if (s == "unit")
                scene.loss_model = PathLossModel::Unit;
            else
                rd.fail(pl, "'path_losses' must be 'free-space', 'unit' or a list");
        } else if (pl.IsSequence()) {
            scene.loss_model = PathLossModel::Explicit;
            scene.path_losses.clear();
            for (const auto& v : pl)
                scene.path_losses.push_back(rd.complex_value(v, "path_losses"));
        } else {
            rd.fail(pl, "'path_losses' must be 'free-space', 'unit' or a list");
        }
    }

    if (const auto ps = node["paths"]) {
        if (!ps.IsSequence() || ps.size() == 0)
            rd.fail(ps, "'paths' must be a nonempty list");
        scene.from_geometry = false;
        scene.paths.clear();
        for (const auto& item : ps) {
            rd.expect_map(item, "paths entry");
            rd.check_keys(item, "paths", {"delay_tap", "doppler_tap", "path_loss"});
            if (!item["delay_tap"] || !item["doppler_tap"])
                rd.fail(item, "each path needs 'delay_tap' and 'doppler_tap'");
            Path p;
            p.delay_tap = rd.scalar<int>(item["delay_tap"], "delay_tap");
            p.doppler_tap = rd.scalar<int>(item["doppler_tap"], "doppler_tap");
            if (item["path_loss"])
                p.path_loss = rd.complex_value(item["path_loss"], "path_loss");
            scene.paths.push_back(p);
        }
    }

    if (const auto gp = node["gain_profile"]) {
        if (gp.IsScalar() && gp.as<std::string>() == "flat") {
            scene.gain_profile.reset();
        } else if (gp.IsSequence() && gp.size() > 0) {
            const auto rows = static_cast<Eigen::Index>(gp.size());
            Eigen::Index cols = -1;
            RMatrix g;
            for (Eigen::Index i = 0; i < rows; ++i) {
                const auto row = rd.numbers(gp[static_cast<std::size_t>(i)], "gain_profile row");
                if (cols < 0) {
                    cols = static_cast<Eigen::Index>(row.size());
                    g.resize(rows, cols);
                }
                if (static_cast<Eigen::Index>(row.size()) != cols)
                    rd.fail(gp[static_cast<std::size_t>(i)], "'gain_profile' rows must have equal length");
                for (Eigen::Index j = 0; j < cols; ++j)
                    g(i, j) = row[static_cast<std::size_t>(j)];
            }
            if ((g.array() < 0).any())
                rd.fail(gp, "'gain_profile' entries must be non-negative");
            scene.gain_profile = g;
        } else {
            rd.fail(gp, "'gain_profile' must be 'flat' or an N x L list of rows");
        }
    }
}

inline void parse_rcs(const Reader& rd, const YAML::Node& node, RcsConfig& rcs)
{
    rd.expect_map(node, "rcs");
    auto allowed = Reader::spellings("total_variance", {"", "_db"});
    allowed.insert({"nlos_fraction", "model"});
    rd.check_keys(node, "rcs", allowed);
    if (auto v = rd.ratio(node, "total_variance")) {
        if (*v < 0)
            rd.fail(node, "'total_variance' must be non-negative");
        rcs.total_variance = *v;
    }
    if (const auto f = node["nlos_fraction"]) {
        rcs.nlos_fraction = rd.number(f, "nlos_fraction");
        if (rcs.nlos_fraction < 0 || rcs.nlos_fraction > 1)
            rd.fail(f, "'nlos_fraction' must lie in [0, 1]");
    }
    if (const auto m = node["model"]) {
        const auto s = rd.scalar<std::string>(m, "model");
        if (s == "swerling-i")
            rcs.model = RcsModel::SwerlingI;
        else if (s == "per-subcarrier")
            rcs.model = RcsModel::PerSubcarrier;
        else
            rd.fail(m, "'model' must be 'swerling-i' or 'per-subcarrier'");
    }
}

inline void parse_comm(const Reader& rd, const YAML::Node& node, CommConfig& comm)
{
    rd.expect_map(node, "comm");
    rd.check_keys(node, "comm", {"channel", "values"});
    if (const auto c = node["channel"]) {
        const auto s = rd.scalar<std::string>(c, "channel");
        if (s == "flat")
            comm.model = CommChannelModel::Flat;
        else if (s == "rayleigh")
            comm.model = CommChannelModel::Rayleigh;
        else if (s == "fixed")
            comm.model = CommChannelModel::Fixed;
        else
            rd.fail(c, "'channel' must be 'flat', 'rayleigh' or 'fixed'");
    }
    if (const auto v = node["values"]) {
        if (!v.IsSequence())
            rd.fail(v, "'values' must be a list");
        comm.values.clear();
        for (const auto& item : v)
            comm.values.push_back(rd.complex_value(item, "values"));
    }
    if (comm.model == CommChannelModel::Fixed && comm.values.empty())
        rd.fail(node, "the fixed comm channel needs 'values'");
}

inline void parse_run(const Reader& rd, const YAML::Node& node, RunConfig& run)
{
    rd.expect_map(node, "run");
    rd.check_keys(node, "run",
                  {"seed", "n_trials", "null_trials", "p_fa", "variants", "sweep", "sweep_p_fa", "random_symbols"});
    if (node["seed"])
        run.seed = rd.scalar<std::uint64_t>(node["seed"], "seed");
    if (node["n_trials"]) {
        run.n_trials = rd.scalar<std::size_t>(node["n_trials"], "n_trials");
        if (run.n_trials == 0)
            rd.fail(node["n_trials"], "'n_trials' must be positive");
    }
    if (node["null_trials"])
        run.null_trials = rd.scalar<std::size_t>(node["null_trials"], "null_trials");
    auto probabilities = [&](const YAML::Node& n, const std::string& what) {
        auto v = rd.numbers(n, what);
        if (v.empty())
            rd.fail(n, "'" + what + "' must not be empty");
        for (double p : v)
            if (!(p > 0 && p <= 1))
                rd.fail(n, "'" + what + "' entries must lie in (0, 1]");
        return v;
    };
    if (node["p_fa"])
        run.p_fa = probabilities(node["p_fa"], "p_fa");
    if (node["sweep_p_fa"]) {
        run.sweep_p_fa = rd.number(node["sweep_p_fa"], "sweep_p_fa");
        if (!(run.sweep_p_fa > 0 && run.sweep_p_fa <= 1))
            rd.fail(node["sweep_p_fa"], "'sweep_p_fa' must lie in (0, 1]");
    }
    if (const auto s = node["sweep"]) {
        run.sweep = rd.numbers(s, "sweep");
        for (double f : run.sweep)
            if (f < 0 || f > 1)
                rd.fail(s, "'sweep' entries must lie in [0, 1]");
    }
    if (const auto v = node["variants"]) {
        if (!v.IsSequence() || v.size() == 0)
            rd.fail(v, "'variants' must be a nonempty list");
        run.variants.clear();
        for (const auto& item : v) {
            const auto name = rd.scalar<std::string>(item, "variants");
            const auto parsed = parse_variant(name);
            if (!parsed)
                rd.fail(item, "unknown design variant '" + name +
                                  "' (expected joint, transmit-only, detector-only, none or los-only)");
            if (std::find(run.variants.begin(), run.variants.end(), *parsed) != run.variants.end())
                rd.fail(item, "design variant '" + name + "' listed twice");
            run.variants.push_back(*parsed);
        }
    }
    if (node["random_symbols"])
        run.random_symbols = rd.scalar<bool>(node["random_symbols"], "random_symbols");
}

inline void parse_map(const Reader& rd, const YAML::Node& node, MapConfig& map)
{
    rd.expect_map(node, "map");
    rd.check_keys(node, "map", {"p_fa", "null_frames", "frame"});
    if (node["p_fa"]) {
        map.p_fa = rd.number(node["p_fa"], "p_fa");
        if (!(map.p_fa > 0 && map.p_fa <= 1))
            rd.fail(node["p_fa"], "'p_fa' must lie in (0, 1]");
    }
    if (node["null_frames"])
        map.null_frames = rd.scalar<std::size_t>(node["null_frames"], "null_frames");
    if (node["frame"])
        map.frame = rd.scalar<std::uint64_t>(node["frame"], "frame");
}

/// Built-in profile defaults, applied beneath the document.
inline void apply_profile_defaults(const std::string& profile, ExperimentConfig& cfg)
{
    if (profile == "desk") {
        cfg.grid.n_subcarriers = cfg.grid.n_symbols = 16;
        cfg.run.n_trials = 10000;
    } else if (profile == "full") {
        cfg.grid.n_subcarriers = cfg.grid.n_symbols = 64;
        cfg.run.n_trials = 100000;
    } else {
        throw Error(ErrorKind::Config, "unknown profile '" + profile + "' (expected desk or full)");
    }
}

} // namespace config_detail

/// Parses a configuration document. `source` names it in diagnostics.
inline ExperimentConfig parse_config(const std::string& text, const std::string& profile = "desk",
                                     const std::string& source = "<config>")
{
    using namespace config_detail;
    Reader rd(source);
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        std::ostringstream os;
        os << source << ':' << e.mark.line + 1 << ':' << e.mark.column + 1 << ": " << e.msg;
        throw Error(ErrorKind::Config, os.str());
    }
    if (!root.IsMap())
        rd.fail_block("the document must be a mapping of blocks");
    rd.check_keys(root, "top level", {"grid", "scene", "rcs", "comm", "run", "map", "profiles"});
    for (const char* block : {"grid", "scene", "rcs", "comm", "run"})
        if (!root[block])
            rd.fail_block(std::string("missing required block '") + block + "'");

    ExperimentConfig cfg;
    cfg.profile = profile;
    apply_profile_defaults(profile, cfg);

    YAML::Node doc = root;
    if (const auto profiles = root["profiles"]) {
        rd.expect_map(profiles, "profiles");
        rd.check_keys(profiles, "profiles", {"desk", "full"});
        if (const auto selected = profiles[profile]) {
            rd.expect_map(selected, "profiles." + profile);
            rd.check_keys(selected, "profiles." + profile, {"grid", "scene", "rcs", "comm", "run", "map"});
            doc = merge(root, selected);
        }
    }

    parse_grid(rd, doc["grid"], cfg.grid);
    parse_scene(rd, doc["scene"], cfg.scene);
    parse_rcs(rd, doc["rcs"], cfg.rcs);
    parse_comm(rd, doc["comm"], cfg.comm);
    parse_run(rd, doc["run"], cfg.run);
    if (doc["map"])
        parse_map(rd, doc["map"], cfg.map);

    if (cfg.comm.model == CommChannelModel::Fixed && cfg.comm.values.size() != cfg.grid.n())
        rd.fail(doc["comm"]["values"], "'values' needs one entry per subcarrier (" +
                                           std::to_string(cfg.grid.n()) + ")");
    if (!cfg.scene.from_geometry) {
        for (std::size_t l = 0; l < cfg.scene.paths.size(); ++l) {
            const auto& p = cfg.scene.paths[l];
            if (p.delay_tap < 0 || static_cast<std::size_t>(p.delay_tap) >= cfg.grid.n() || p.doppler_tap < 0 ||
                static_cast<std::size_t>(p.doppler_tap) >= cfg.grid.m())
                rd.fail(doc["scene"]["paths"][l], "path taps out of range for this grid");
        }
    }
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path, const std::string& profile = "desk")
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorKind::Config, "cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), profile, path);
}

} // namespace isacdet
