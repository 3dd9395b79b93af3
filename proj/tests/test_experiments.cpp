// SPDX-License-Identifier: Apache-2.0
#include "isacdet/experiments.hpp"

#include <catch_amalgamated.hpp>

#include <filesystem>
#include <map>
#include <sstream>

using namespace isacdet;

namespace {

// Small three-path scene; fast enough to run every command in a unit test.
const char* kSmall = R"(grid:
  n_subcarriers: 8
  n_symbols: 8
  subcarrier_spacing_khz: 120
  carrier_freq_ghz: 5
  radar_noise_power_w: 1.0
  comm_noise_power_w: 1.0
  power_budget_w: 64
  comm_snr_target: 0.25
scene:
  paths:
    - {delay_tap: 1, doppler_tap: 2}
    - {delay_tap: 4, doppler_tap: 5, path_loss: 0.7}
    - {delay_tap: 6, doppler_tap: 7, path_loss: [0, 0.5]}
rcs:
  total_variance: 0.3
  nlos_fraction: 0.6
comm:
  channel: rayleigh
run:
  seed: 99
  n_trials: 2000
  p_fa: [0.1, 0.05, 1.0]
  sweep: [0.0, 0.5, 0.9]
  sweep_p_fa: 0.05
map:
  p_fa: 0.01
)";

using Table = std::vector<std::vector<std::string>>;

Table parse_csv(const std::string& text)
{
    Table out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ','))
            cells.push_back(cell);
        out.push_back(cells);
    }
    return out;
}

double cell(const Table& t, std::size_t row, std::size_t col) { return std::stod(t[row][col]); }

} // namespace

TEST_CASE("FNV-1a reference values and hex formatting", "[experiments]")
{
    CHECK(hex64(fnv1a64("")) == "cbf29ce484222325");
    CHECK(hex64(fnv1a64("a")) == "af63dc4c8601ec8c");
    CHECK(hex64(fnv1a64("foobar")) == "85944171f73967e8");
    CHECK(hex64(0x1) == "0000000000000001");
}

TEST_CASE("numbers are formatted round-trip and locale-free", "[experiments]")
{
    CHECK(format_number(0.1) == "0.1");
    CHECK(format_number(1e-3) == "0.001");
    CHECK(format_number(1.0) == "1");
    CHECK(format_number(std::size_t{10000}) == "10000");
    CHECK(format_number(-3) == "-3");
    for (double v : {1.0 / 3.0, 2.5e-11, 123456.789, 0.9908})
        CHECK(std::stod(format_number(v)) == v);
    CsvWriter w{"a", "b", "c"};
    w.row("x", 0.5, std::size_t{2});
    CHECK(w.str() == "a,b,c\nx,0.5,2\n");
}

TEST_CASE("config hash tracks the resolved configuration", "[experiments]")
{
    const auto a = parse_config(kSmall);
    auto b = a;
    CHECK(config_hash(a) == config_hash(b));
    b.run.seed += 1;
    CHECK(config_hash(a) != config_hash(b));
    // Equivalent spellings resolve to the same configuration.
    std::string text = kSmall;
    text.replace(text.find("subcarrier_spacing_khz: 120"), 27, "subcarrier_spacing_hz: 120000");
    CHECK(config_hash(parse_config(text)) == config_hash(a));
    CHECK(config_hash(a).size() == 16);
}

TEST_CASE("manifest entries accumulate per command", "[experiments]")
{
    const auto dir = std::filesystem::temp_directory_path() / "isacdet_manifest_test";
    std::filesystem::create_directories(dir);
    const auto path = dir / "manifest.json";
    std::filesystem::remove(path);
    const auto cfg = parse_config(kSmall);

    auto doc = merge_manifest(path, run_manifest(cfg, "roc", {"roc.csv"}));
    write_text(path, doc.dump(2));
    doc = merge_manifest(path, run_manifest(cfg, "ddmap", {"ddmap.csv"}));
    write_text(path, doc.dump(2));
    CHECK(doc["runs"].size() == 2);
    CHECK(doc["runs"]["roc"]["config_hash"] == "fnv1a64:" + config_hash(cfg));
    CHECK(doc["runs"]["ddmap"]["seed"] == 99);
    CHECK(doc["tool"] == "isacdet");

    write_text(path, "not json");
    CHECK(merge_manifest(path, run_manifest(cfg, "optimize", {}))["runs"].size() == 1);
    std::filesystem::remove_all(dir);
}

TEST_CASE("null trial counts", "[experiments]")
{
    RunConfig run;
    run.n_trials = 100;
    CHECK(null_trial_count(run, 1e-3) == 50000);
    CHECK(null_trial_count(run, 0.5) == 100);
    run.null_trials = 7;
    CHECK(null_trial_count(run, 1e-3) == 7);
    MapConfig map;
    map.p_fa = 1e-3;
    CHECK(map_null_frames(map, 256) == 196);
    CHECK(map_null_frames(map, 4096) == 100);
}

TEST_CASE("variant designs", "[experiments]")
{
    const Setup s = build_setup(parse_config(kSmall));
    REQUIRE(s.truth.size() == 3);
    CHECK((s.initial.gains.array() >= s.bounds.array()).all());
    const auto joint = design_variant(s, Variant::Joint);
    const auto tx = design_variant(s, Variant::TransmitOnly);
    const auto det = design_variant(s, Variant::DetectorOnly);
    const auto none = design_variant(s, Variant::None);
    const auto los = design_variant(s, Variant::LosOnly);

    CHECK(none.alloc.gains == s.initial.gains);
    CHECK((none.w.values() - WeightVector::equal(3).values()).norm() == 0.0);
    CHECK(det.alloc.gains == s.initial.gains);
    CHECK((tx.w.values() - WeightVector::equal(3).values()).norm() == 0.0);
    CHECK(los.projectors.size() == 1);
    CHECK(los.w.size() == 1);

    const RMatrix g = path_energy_matrix(s.channels, s.design_symbols);
    const double j_joint = design_objective(g, joint.alloc.gains, joint.w);
    for (const auto* d : {&tx, &det, &none})
        CHECK(j_joint >= design_objective(g, d->alloc.gains, d->w) * (1 - 1e-9));
    CHECK(joint.alloc.feasible(s.grid.power_budget, 1e-9));
}

TEST_CASE("roc: p_fa = 1 detects everything and output is reproducible", "[experiments]")
{
    const auto cfg = parse_config(kSmall);
    const std::string a = cmd_roc(cfg, 1);
    CHECK(a == cmd_roc(cfg, 3));
    const auto t = parse_csv(a);
    REQUIRE(t.size() == 1 + 5 * 3);
    CHECK(t[0] == std::vector<std::string>{"variant", "p_fa", "p_d", "halfwidth", "threshold", "p_fa_empirical",
                                           "n_trials"});
    std::map<std::string, std::vector<double>> pd;
    for (std::size_t i = 1; i < t.size(); ++i) {
        const double p = cell(t, i, 1);
        if (p == 1.0)
            CHECK(cell(t, i, 2) == 1.0);
        CHECK(cell(t, i, 5) <= p);
        CHECK(t[i][6] == "2000");
        pd[t[i][0]].push_back(cell(t, i, 2));
    }
    // Rows are in ascending p_fa, so p_d is non-decreasing within a variant.
    for (const auto& [name, v] : pd)
        for (std::size_t k = 1; k < v.size(); ++k)
            CHECK(v[k] >= v[k - 1]);
}

TEST_CASE("rcs sweep trends", "[experiments]")
{
    auto cfg = parse_config(kSmall);
    cfg.run.variants = {Variant::Joint, Variant::LosOnly};
    const auto t = parse_csv(cmd_rcs_sweep(cfg, 2));
    REQUIRE(t.size() == 1 + 3 * 2);
    std::map<std::string, std::vector<double>> pd, hw;
    for (std::size_t i = 1; i < t.size(); ++i) {
        pd[t[i][1]].push_back(cell(t, i, 2));
        hw[t[i][1]].push_back(cell(t, i, 3));
    }
    // All RCS on the LoS path: the extra projectors cost the joint
    // detector a little; with the RCS moved onto NLoS paths the LoS-only
    // detector degrades while the joint one does not.
    const auto& los = pd["los-only"];
    const auto& joint = pd["joint"];
    CHECK(los[0] >= los[1] - 2 * hw["los-only"][1]);
    CHECK(los[1] >= los[2] - 2 * hw["los-only"][2]);
    CHECK(joint[2] > los[2] + 2 * (hw["joint"][2] + hw["los-only"][2]));
}

TEST_CASE("ddmap: strong echo peaks at the LoS bin in combined mode", "[experiments]")
{
    auto cfg = parse_config(kSmall);
    cfg.rcs.total_variance = 50.0;
    const std::string text = cmd_ddmap(cfg, 2);
    CHECK(text == cmd_ddmap(cfg, 1));
    const auto t = parse_csv(text);
    REQUIRE(t.size() == 1 + 2 * 64);
    double best = 0;
    std::pair<int, int> arg;
    for (std::size_t i = 1; i < t.size(); ++i)
        if (t[i][0] == "combined" && cell(t, i, 3) > best) {
            best = cell(t, i, 3);
            arg = {std::stoi(t[i][1]), std::stoi(t[i][2])};
        }
    CHECK(arg == std::make_pair(1, 2));

    const auto dump = std::filesystem::temp_directory_path() / "isacdet_frame_test.bin";
    (void)cmd_ddmap(cfg, 1, dump);
    std::ifstream in(dump, std::ios::binary);
    const auto d = read_frame_dump(in);
    CHECK(d.n_paths == 3);
    CHECK(d.y.rows() == 8);
    std::filesystem::remove(dump);
}

TEST_CASE("optimize: trace, weights and single-path case", "[experiments]")
{
    const auto cfg = parse_config(kSmall);
    const auto t = parse_csv(cmd_optimize(cfg));
    std::vector<double> trace, a, w;
    for (std::size_t i = 1; i < t.size(); ++i) {
        if (t[i][0] == "objective")
            trace.push_back(cell(t, i, 2));
        else if (t[i][0] == "a")
            a.push_back(cell(t, i, 2));
        else if (t[i][0] == "w")
            w.push_back(cell(t, i, 2));
        else if (t[i][0] == "converged")
            CHECK(t[i][2] == "1");
    }
    REQUIRE(trace.size() >= 2);
    for (std::size_t k = 1; k < trace.size(); ++k)
        CHECK(trace[k] >= trace[k - 1] * (1 - 1e-12));
    REQUIRE(a.size() == 64);
    REQUIRE(w.size() == 3);

    const Setup s = build_setup(cfg);
    PowerAllocation alloc{Eigen::Map<const RVector>(a.data(), 64), s.bounds};
    const auto expected = update_weights(s.channels, alloc, s.design_symbols);
    for (std::size_t l = 0; l < 3; ++l)
        CHECK(std::abs(w[l] - expected[l]) < 1e-9);

    std::string single = kSmall;
    const auto from = single.find("    - {delay_tap: 4");
    single.erase(from, single.find("rcs:") - from);
    const auto t1 = parse_csv(cmd_optimize(parse_config(single)));
    for (std::size_t i = 1; i < t1.size(); ++i)
        if (t1[i][0] == "w")
            CHECK(cell(t1, i, 2) == 1.0);
}

TEST_CASE("setup errors surface with their kind", "[experiments]")
{
    auto cfg = parse_config(kSmall);
    cfg.grid.comm_snr_target = 1e6;
    try {
        (void)build_setup(cfg);
        FAIL("expected Infeasible");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Infeasible);
    }
    cfg = parse_config(kSmall);
    cfg.scene.gain_profile = RMatrix::Ones(8, 2);
    CHECK_THROWS_AS(build_setup(cfg), Error);
}
