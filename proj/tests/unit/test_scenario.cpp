#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "pous/errors.hpp"
#include "pous/scenario.hpp"

using namespace pous;
using namespace pous::scenario;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string message_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const ConfigError& e) {
        return e.what();
    }
    return {};
}

Scenario tiny() {
    Scenario s = preset("fig7-n30");
    s.base.sim_time = 1800;
    s.base.block_interval = 300;
    s.sweep = Sweep{"block_size_mb", {0.5, 1.0}};
    s.replicates = 2;
    return s;
}

CellResult fake(const std::string& protocol, double point, std::uint32_t rep, double tps, double latency) {
    CellResult c;
    c.protocol = protocol;
    c.sweep_value = point;
    c.replicate = rep;
    c.metrics.tps = tps;
    c.metrics.mean_latency = latency;
    return c;
}

}  // namespace

TEST(Presets, AllResolveAndValidate) {
    const auto names = preset_names();
    for (const char* want : {"fig7-n30", "fig7-n200", "fig7-n1000", "fig8-n30", "fig8-n200", "fig8-n1000",
                             "fig9-size", "fig9-interval", "fig10", "cost", "pow-anchor"}) {
        EXPECT_NE(std::find(names.begin(), names.end(), want), names.end()) << want;
    }
    for (const auto& n : names) EXPECT_NO_THROW(preset(n).validate()) << n;
    EXPECT_THROW(preset("fig11"), ConfigError);

    const auto f7 = preset("fig7-n200");
    ASSERT_TRUE(f7.sweep.has_value());
    EXPECT_EQ(f7.sweep->parameter, "block_size_mb");
    EXPECT_EQ(f7.sweep->values, (std::vector<double>{0.5, 1, 2, 4, 8, 16}));
    EXPECT_EQ(f7.base.n_nodes, 200u);
    EXPECT_EQ(f7.base.sim_time, 10000.0);
    const auto f8 = preset("fig8-n30");
    EXPECT_EQ(f8.sweep->parameter, "block_interval");
    EXPECT_EQ(f8.sweep->values, (std::vector<double>{200, 400, 600, 800, 1000}));
}

TEST(Presets, FastModeKeepsHorizon) {
    auto s = preset("fig7-n30");
    apply_fast_mode(s);
    EXPECT_EQ(s.replicates, kFastReplicates);
    EXPECT_EQ(s.base.sim_time, 10000.0);
}

TEST(Overrides, FieldsAndScenarioKeys) {
    auto s = preset("fig8-n30");
    apply_override(s, "n_nodes=1000");
    apply_override(s, "replicates", "3");
    apply_override(s, "protocols=pow");
    apply_override(s, "theta=0.25");
    EXPECT_EQ(s.base.n_nodes, 1000u);
    EXPECT_EQ(s.replicates, 3u);
    EXPECT_EQ(s.protocols, (std::vector<std::string>{"pow"}));
    EXPECT_DOUBLE_EQ(s.base.theta, 0.25);
    apply_override(s, "block_interval=700");
    EXPECT_FALSE(s.sweep.has_value());
    EXPECT_EQ(s.base.block_interval, 700.0);
    apply_override(s, "sweep=block_delay:0.2,0.6");
    ASSERT_TRUE(s.sweep.has_value());
    EXPECT_EQ(s.sweep->values, (std::vector<double>{0.2, 0.6}));
    EXPECT_THROW(apply_override(s, "no_such_field=1"), ConfigError);
    EXPECT_THROW(apply_override(s, "n_nodes=abc"), ConfigError);
    EXPECT_THROW(apply_override(s, "n_nodes"), ConfigError);
}

TEST(Overrides, RangeChecks) {
    auto s = preset("fig7-n30");
    s.sweep->values = {0.1};
    EXPECT_THROW(s.validate(), ConfigError);
    s.allow_out_of_range = true;
    EXPECT_NO_THROW(s.validate());
    auto t = preset("fig8-n30");
    t.sweep->values = {100};
    EXPECT_THROW(t.validate(), ConfigError);
}

TEST(ConfigFile, LoadsAndReportsLines) {
    const auto s = load_config_text(R"({
  "preset": "fig7-n30",
  "replicates": 4,
  "config": {"n_nodes": 40, "block_delay": 0.3}
})");
    EXPECT_EQ(s.replicates, 4u);
    EXPECT_EQ(s.base.n_nodes, 40u);
    EXPECT_DOUBLE_EQ(s.base.block_delay, 0.3);

    const auto syntax = message_of([] { load_config_text("{\n  \"replicates\": 4,\n  \"config\": {\n    \"n_nodes\": ,\n  }\n}"); });
    EXPECT_NE(syntax.find("line 4"), std::string::npos) << syntax;

    const auto unknown = message_of([] { load_config_text("{\n  \"name\": \"x\",\n  \"colour\": 1\n}"); });
    EXPECT_NE(unknown.find("line 3"), std::string::npos) << unknown;
    EXPECT_NE(unknown.find("colour"), std::string::npos) << unknown;

    const auto field = message_of([] { load_config_text("{\n  \"config\": {\n    \"bogus\": 1\n  }\n}"); });
    EXPECT_NE(field.find("bogus"), std::string::npos) << field;

    const auto bad_value = message_of([] { load_config_text("{\n  \"config\": {\n    \"n_nodes\": -5\n  }\n}"); });
    EXPECT_NE(bad_value.find("n_nodes"), std::string::npos) << bad_value;

    const std::vector<std::string> ov{"replicates=9"};
    EXPECT_EQ(load_config_text(R"({"preset": "pow-anchor"})", ov).replicates, 9u);
}

TEST(ConfigFile, FromDiskAndResolve) {
    const auto dir = std::filesystem::temp_directory_path() / "pous_scenario_test";
    std::filesystem::create_directories(dir);
    const auto file = dir / "s.json";
    std::ofstream(file) << R"({"name": "mine", "sweep": {"parameter": "n_nodes", "values": [30, 60]}})";
    const auto s = resolve(file.string());
    EXPECT_EQ(s.name, "mine");
    EXPECT_EQ(resolve("fig10").name, "fig10");
    EXPECT_THROW(resolve((dir / "missing.json").string()), ConfigError);
    std::filesystem::remove_all(dir);
}

TEST(Seeds, DisciplineAndIndependence) {
    EXPECT_EQ(cell_seed(1, "pous", 0.5, 0), cell_seed(1, "pous", 0.5, 0));
    std::set<std::uint64_t> seen;
    for (const char* p : {"pous", "pow"}) {
        for (double v : {0.5, 1.0, 2.0}) {
            for (std::uint32_t r = 0; r < 10; ++r) EXPECT_TRUE(seen.insert(cell_seed(1, p, v, r)).second);
        }
    }
    EXPECT_NE(cell_seed(1, "pous", 1.0, 0), cell_seed(2, "pous", 1.0, 0));
    const auto s = tiny();
    const auto a = config_for_cell(s, 1, "pous", 1.0, 1);
    const auto b = config_for_cell(s, 1, "pow", 1.0, 1);
    EXPECT_EQ(a.workload_seed, b.workload_seed);
    EXPECT_NE(a.seed, b.seed);
    EXPECT_EQ(a.block_size_mb, 1.0);
    EXPECT_NE(workload_seed(1, 1.0, 1), workload_seed(1, 1.0, 2));
}

TEST(Aggregate, MeansAndPairedImprovement) {
    Scenario s = tiny();
    s.sweep->values = {1.0};
    std::vector<CellResult> cells{fake("pous", 1.0, 0, 6.0, 100), fake("pous", 1.0, 1, 8.0, 200),
                                  fake("pow", 1.0, 0, 5.0, 150), fake("pow", 1.0, 1, 5.0, 250)};
    const auto rows = aggregate(s, cells);
    ASSERT_EQ(rows.size(), 2u);
    const auto& pous = rows[0];
    EXPECT_EQ(pous.protocol, "pous");
    EXPECT_EQ(pous.cells, 2u);
    EXPECT_DOUBLE_EQ(pous.tps_mean, 7.0);
    EXPECT_NEAR(pous.tps_sd, std::sqrt(2.0), 1e-12);
    EXPECT_DOUBLE_EQ(pous.latency_mean, 150.0);
    EXPECT_NEAR(pous.tps_improvement_pct, 40.0, 1e-9);
    EXPECT_NEAR(pous.latency_reduction_pct, 25.0, 1e-9);
    EXPECT_EQ(rows[1].tps_improvement_pct, 0.0);
    EXPECT_DOUBLE_EQ(rows[1].tps_sd, 0.0);
}

TEST(Run, RowCountsDeterminismAndEmit) {
    const auto s = tiny();
    const auto r1 = run_scenario(s, RunOptions{7, 1});
    EXPECT_EQ(r1.cells.size(), 2u * 2u * 2u);
    EXPECT_EQ(r1.aggregates.size(), 2u * 2u);
    const auto r2 = run_scenario(s, RunOptions{7, 2});
    ASSERT_EQ(r1.cells.size(), r2.cells.size());
    for (std::size_t i = 0; i < r1.cells.size(); ++i) {
        EXPECT_EQ(cell_csv_row(s, r1.cells[i]), cell_csv_row(s, r2.cells[i]));
    }

    const auto base = std::filesystem::temp_directory_path() / "pous_emit_test";
    std::filesystem::remove_all(base);
    emit(r1, base / "a");
    emit(r2, base / "b");
    for (const char* f : {"cells.csv", "aggregate.csv", "pca.csv", "costs.csv", "summary.txt"}) {
        EXPECT_EQ(slurp(base / "a" / f), slurp(base / "b" / f)) << f;
    }
    const auto cells_csv = slurp(base / "a" / "cells.csv");
    EXPECT_EQ(cells_csv.rfind(kCellCsvHeader, 0), 0u);
    EXPECT_EQ(std::count(cells_csv.begin(), cells_csv.end(), '\n'), 1 + 8);

    RunReport empty;
    empty.scenario = s;
    emit(empty, base / "empty");
    EXPECT_EQ(slurp(base / "empty" / "cells.csv"), std::string(kCellCsvHeader) + "\n");
    EXPECT_EQ(slurp(base / "empty" / "aggregate.csv"), std::string(kAggregateCsvHeader) + "\n");
    std::filesystem::remove_all(base);
}

TEST(Run, FailingCellNamesItself) {
    auto s = tiny();
    s.base.committee_size = 50;
    const auto msg = message_of([&] { run_scenario(s); });
    EXPECT_NE(msg.find("protocol=pous"), std::string::npos) << msg;
    EXPECT_NE(msg.find("replicate="), std::string::npos) << msg;
}
