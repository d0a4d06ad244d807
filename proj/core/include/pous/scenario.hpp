#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pous/simnet.hpp"

namespace pous::scenario {

struct Sweep {
    std::string parameter;
    std::vector<double> values;
};

enum class Kind { kSimulation, kCost };

struct Scenario {
    std::string name;
    Kind kind = Kind::kSimulation;
    sim::SimConfig base;
    std::optional<Sweep> sweep;
    std::vector<std::string> protocols{"pous", "pow"};
    std::uint32_t replicates = 100;
    bool allow_out_of_range = false;  // sweep values outside the published ranges

    void validate() const;
    std::vector<double> sweep_points() const;  // a single NaN point when there is no sweep
};

std::vector<std::string> preset_names();
/// Throws ConfigError for an unknown name.
Scenario preset(std::string_view name);

/// Sets one SimConfig field or scenario field ("replicates", "protocols") from text.
void apply_override(Scenario& scenario, std::string_view key, std::string_view value);
/// Parses "key=value".
void apply_override(Scenario& scenario, std::string_view assignment);

/// CI mode: fewer replicates, same simulated horizon.
void apply_fast_mode(Scenario& scenario);
inline constexpr std::uint32_t kFastReplicates = 5;

/// Reads a JSON scenario file and merges overrides. Unknown keys and invalid values
/// raise ConfigError naming the field (or the line of a syntax error).
Scenario load_config(const std::filesystem::path& path, std::span<const std::string> overrides = {});
Scenario load_config_text(std::string_view text, std::span<const std::string> overrides = {});

/// Preset name or path to a scenario file.
Scenario resolve(std::string_view name_or_path, std::span<const std::string> overrides = {});

std::uint64_t cell_seed(std::uint64_t master, std::string_view protocol, double sweep_value,
                        std::uint32_t replicate);
/// Shared by both protocols so improvements compare runs over the same workload.
std::uint64_t workload_seed(std::uint64_t master, double sweep_value, std::uint32_t replicate);

sim::SimConfig config_for_cell(const Scenario& scenario, std::uint64_t master, std::string_view protocol,
                               double sweep_value, std::uint32_t replicate);

struct CellResult {
    std::string protocol;
    double sweep_value = 0.0;
    std::uint32_t replicate = 0;
    std::uint64_t seed = 0;
    sim::Metrics metrics;
};

struct Aggregate {
    std::string protocol;
    double sweep_value = 0.0;
    std::uint32_t cells = 0;
    double tps_mean = 0.0;
    double tps_sd = 0.0;
    double latency_mean = 0.0;
    double latency_sd = 0.0;
    double tps_improvement_pct = 0.0;        // PoUS rows only: (pous - pow) / pow * 100
    double latency_reduction_pct = 0.0;     // PoUS rows only: (pow - pous) / pow * 100
};

struct CostRow {
    std::string series;  // "compute" or "communication"
    double x = 0.0;      // entries compared, or number of users
    double value = 0.0;  // seconds, or bytes
};

struct RunReport {
    Scenario scenario;
    std::uint64_t master_seed = 0;
    std::vector<CellResult> cells;
    std::vector<Aggregate> aggregates;
    std::vector<sim::PcaRow> pca;
    std::vector<CostRow> costs;
};

struct RunOptions {
    std::uint64_t master_seed = 1;
    unsigned jobs = 1;
};

/// Runs every (protocol, sweep point, replicate) cell. A failing cell aborts the run
/// with a ConfigError naming the cell.
RunReport run_scenario(const Scenario& scenario, const RunOptions& options = {});
CellResult run_cell(const Scenario& scenario, std::uint64_t master, std::string_view protocol,
                    double sweep_value, std::uint32_t replicate);

std::vector<Aggregate> aggregate(const Scenario& scenario, std::span<const CellResult> cells);

inline constexpr const char* kCellCsvHeader =
    "protocol,sweep_param,sweep_value,replicate,seed,n_nodes,generated,confirmed,tps,"
    "mean_latency,p50_latency,p90_latency,blocks,rounds,aborts,crypto_compares,crypto_bytes,"
    "functionality_ok,functionality_rounds";
inline constexpr const char* kAggregateCsvHeader =
    "protocol,sweep_param,sweep_value,cells,tps_mean,tps_sd,latency_mean,latency_sd,"
    "tps_improvement_pct,latency_reduction_pct";

std::string cell_csv_row(const Scenario& scenario, const CellResult& cell);
std::string aggregate_csv_row(const Scenario& scenario, const Aggregate& row);

/// Writes cells.csv, aggregate.csv, pca.csv, costs.csv and summary.txt under out_dir.
/// Throws std::runtime_error naming the path on IO failure.
std::vector<std::filesystem::path> emit(const RunReport& report, const std::filesystem::path& out_dir);

std::string summary_text(const RunReport& report);

}  // namespace pous::scenario
