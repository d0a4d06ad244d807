#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "pous/errors.hpp"
#include "pous/scenario.hpp"
#include "pous/simnet.hpp"

namespace fs = std::filesystem;
using namespace pous;

namespace {

std::string point_label(double v) { return std::isnan(v) ? std::string{"base"} : fmt::format("{}", v); }

void write_traces(const scenario::RunReport& report, const fs::path& out) {
    const auto dir = out / "traces";
    fs::create_directories(dir);
    for (const auto& cell : report.cells) {
        const auto path = dir / fmt::format("{}-{}-{}.trace", cell.protocol, point_label(cell.sweep_value),
                                            cell.replicate);
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        if (!f) throw std::runtime_error(fmt::format("cannot open {} for writing", path.string()));
        for (const auto& line : cell.metrics.trace) f << line << '\n';
        if (!f) throw std::runtime_error(fmt::format("failed writing {}", path.string()));
    }
}

int cmd_run(const std::string& target, bool fast, std::uint64_t seed, const std::string& out,
            const std::vector<std::string>& overrides, unsigned jobs, bool trace, bool quiet) {
    auto s = scenario::resolve(target, overrides);
    if (fast) scenario::apply_fast_mode(s);
    if (trace) s.base.record_trace = true;
    s.validate();

    scenario::RunOptions options;
    options.master_seed = seed;
    options.jobs = jobs;
    const auto report = scenario::run_scenario(s, options);
    const fs::path dir = out.empty() ? fs::path("pous-out") / s.name : fs::path(out);
    const auto files = scenario::emit(report, dir);
    if (trace) write_traces(report, dir);
    if (!quiet) {
        std::cout << scenario::summary_text(report);
        std::cout << "\nwrote:\n";
        for (const auto& f : files) std::cout << "  " << f.string() << '\n';
    }
    return 0;
}

int cmd_replay(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(fmt::format("cannot open {}", path));
    const auto r = sim::replay_trace(in);
    fmt::print("created: {}\nconfirmed: {}\nblocks: {}\nsim_time: {}\ntps: {:.6f}\nmean_latency: {:.6f}\n", r.created,
               r.confirmed, r.blocks, r.sim_time, r.tps, r.mean_latency);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"PoUS consensus simulator"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "Run a preset or scenario file and write CSVs");
    std::string target;
    bool fast = false;
    std::uint64_t seed = 1;
    std::string out;
    std::vector<std::string> overrides;
    unsigned jobs = 1;
    bool trace = false;
    bool quiet = false;
    run->add_option("scenario", target, "Preset name or path to a JSON scenario")->required();
    run->add_flag("--fast", fast, "CI mode: 5 replicates");
    run->add_option("--seed", seed, "Master seed");
    run->add_option("--out", out, "Output directory (default pous-out/<scenario>)");
    run->add_option("--set", overrides, "Override key=value (repeatable)");
    run->add_option("--jobs", jobs, "Cells run in parallel")->check(CLI::Range(1u, 256u));
    run->add_flag("--trace", trace, "Also write one event trace per cell under <out>/traces");
    run->add_flag("-q,--quiet", quiet, "Do not print the summary");

    auto* list = app.add_subcommand("presets", "List scenario presets");

    auto* replay = app.add_subcommand("replay", "Recompute TPS and latency from an event trace");
    std::string trace_path;
    replay->add_option("trace", trace_path, "Trace file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) return cmd_run(target, fast, seed, out, overrides, jobs, trace, quiet);
        if (*list) {
            for (const auto& name : scenario::preset_names()) {
                const auto s = scenario::preset(name);
                fmt::print("{:<14} {}\n", name,
                           s.kind == scenario::Kind::kCost
                               ? std::string{"2PC compute and vote-matrix communication cost curves"}
                               : fmt::format("N={} protocols={} {}", s.base.n_nodes, fmt::join(s.protocols, ","),
                                             s.sweep ? fmt::format("sweep {} {{{}}}", s.sweep->parameter,
                                                                   fmt::join(s.sweep->values, ","))
                                                     : std::string{"no sweep"}));
            }
            return 0;
        }
        if (*replay) return cmd_replay(trace_path);
    } catch (const ConfigError& e) {
        std::cerr << "pous: configuration error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "pous: error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
