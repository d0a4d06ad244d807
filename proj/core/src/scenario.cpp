#include "pous/scenario.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <charconv>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <functional>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "pous/crypto.hpp"
#include "pous/errors.hpp"
#include "pous/garbled2pc.hpp"
#include "pous/similarity.hpp"

namespace pous::scenario {

namespace {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Text parsing
// ---------------------------------------------------------------------------

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

double parse_double(std::string_view key, std::string_view text) {
    text = trim(text);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(v)) {
        throw ConfigError(fmt::format("{}: expected a number, got \"{}\"", key, text));
    }
    return v;
}

std::uint64_t parse_uint(std::string_view key, std::string_view text) {
    text = trim(text);
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec == std::errc{} && ptr == text.data() + text.size()) return v;
    // Accept integral values written as decimals, e.g. "1000.0" from a JSON number.
    const double d = parse_double(key, text);
    if (d < 0 || d != std::floor(d) || d > 1.8e19) {
        throw ConfigError(fmt::format("{}: expected a nonnegative integer, got \"{}\"", key, text));
    }
    return static_cast<std::uint64_t>(d);
}

std::uint32_t parse_u32(std::string_view key, std::string_view text) {
    const auto v = parse_uint(key, text);
    if (v > 0xFFFFFFFFull) throw ConfigError(fmt::format("{}: value {} is too large", key, v));
    return static_cast<std::uint32_t>(v);
}

bool parse_bool(std::string_view key, std::string_view text) {
    text = trim(text);
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw ConfigError(fmt::format("{}: expected true or false, got \"{}\"", key, text));
}

std::vector<std::string> split(std::string_view text, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = text.find(sep, start);
        const auto part = trim(text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (!part.empty()) out.emplace_back(part);
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

// ---------------------------------------------------------------------------
// SimConfig field table
// ---------------------------------------------------------------------------

struct Field {
    const char* name;
    bool numeric;
    std::function<void(sim::SimConfig&, std::string_view)> set;
};

template <class T>
Field real_field(const char* name, T sim::SimConfig::*member) {
    return {name, true, [name, member](sim::SimConfig& c, std::string_view v) { c.*member = parse_double(name, v); }};
}

Field u32_field(const char* name, std::uint32_t sim::SimConfig::*member) {
    return {name, true, [name, member](sim::SimConfig& c, std::string_view v) { c.*member = parse_u32(name, v); }};
}

Field u64_field(const char* name, std::uint64_t sim::SimConfig::*member) {
    return {name, true, [name, member](sim::SimConfig& c, std::string_view v) { c.*member = parse_uint(name, v); }};
}

Field bool_field(const char* name, bool sim::SimConfig::*member) {
    return {name, false, [name, member](sim::SimConfig& c, std::string_view v) { c.*member = parse_bool(name, v); }};
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = [] {
        using C = sim::SimConfig;
        std::vector<Field> t{
            u32_field("n_nodes", &C::n_nodes),
            real_field("sim_time", &C::sim_time),
            u32_field("tx_size", &C::tx_size),
            real_field("tx_delay", &C::tx_delay),
            real_field("block_size_mb", &C::block_size_mb),
            real_field("block_interval", &C::block_interval),
            real_field("block_delay", &C::block_delay),
            real_field("block_reward", &C::block_reward),
            real_field("link_delay_mean", &C::link_delay_mean),
            real_field("link_delay_sigma", &C::link_delay_sigma),
            real_field("tx_count_mean", &C::tx_count_mean),
            real_field("tx_count_sigma", &C::tx_count_sigma),
            real_field("fee_mean", &C::fee_mean),
            real_field("fee_sigma", &C::fee_sigma),
            real_field("tx_epoch", &C::tx_epoch),
            u32_field("n_classes", &C::n_classes),
            real_field("theta", &C::theta),
            u32_field("eta", &C::eta),
            u32_field("kmeans_k", &C::kmeans_k),
            real_field("power_min", &C::power_min),
            real_field("power_max", &C::power_max),
            u64_field("budget_max_pairs", &C::budget_max_pairs),
            u32_field("voter_panel", &C::voter_panel),
            u32_field("committee_size", &C::committee_size),
            u32_field("rotation_period", &C::rotation_period),
            real_field("honest_fraction", &C::honest_fraction),
            u32_field("crypto_samples_per_round", &C::crypto_samples_per_round),
            u64_field("seed", &C::seed),
            u64_field("workload_seed", &C::workload_seed),
            bool_field("record_trace", &C::record_trace),
            bool_field("record_latencies", &C::record_latencies),
            bool_field("record_pca", &C::record_pca),
            u64_field("pca_round", &C::pca_round),
        };
        t.push_back({"bitwidth", true,
                     [](C& c, std::string_view v) { c.bitwidth = parse_u32("bitwidth", v); }});
        t.push_back({"ot", false, [](C& c, std::string_view v) { c.ot = std::string(trim(v)); }});
        t.push_back({"weight_a", true, [](C& c, std::string_view v) { c.weights.a = parse_double("weight_a", v); }});
        t.push_back({"weight_b", true, [](C& c, std::string_view v) { c.weights.b = parse_double("weight_b", v); }});
        t.push_back({"weight_c", true, [](C& c, std::string_view v) { c.weights.c = parse_double("weight_c", v); }});
        t.push_back({"window_mining", true,
                     [](C& c, std::string_view v) { c.windows.mining = parse_double("window_mining", v); }});
        t.push_back({"window_voting", true,
                     [](C& c, std::string_view v) { c.windows.voting = parse_double("window_voting", v); }});
        return t;
    }();
    return table;
}

const Field* find_field(std::string_view name) {
    // "block_size" is accepted as shorthand for the MB-valued field.
    if (name == "block_size") name = "block_size_mb";
    for (const auto& f : fields()) {
        if (name == f.name) return &f;
    }
    return nullptr;
}

std::string format_value(double v) { return fmt::format("{}", v); }

void set_field(sim::SimConfig& config, std::string_view key, std::string_view value) {
    const Field* f = find_field(key);
    if (f == nullptr) throw ConfigError(fmt::format("unknown field \"{}\"", key));
    f->set(config, value);
}

// Published parameter ranges; sweep values outside them need allow_out_of_range.
struct Range {
    const char* field;
    double lo;
    double hi;
};
constexpr Range kRanges[] = {
    {"n_nodes", 30, 1000},
    {"block_size_mb", 0.5, 16},
    {"block_interval", 200, 1000},
    {"block_delay", 0.2, 0.6},
};

std::uint64_t value_bits(double v) {
    if (std::isnan(v)) return 0x7FF8000000000000ull;
    if (v == 0.0) return 0;  // +0 and -0 are the same sweep point
    return std::bit_cast<std::uint64_t>(v);
}

double mean_of(const std::vector<double>& xs) {
    if (xs.empty()) return 0.0;
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

double sd_of(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    const double m = mean_of(xs);
    double s = 0.0;
    for (double x : xs) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

std::string sweep_param(const Scenario& s) { return s.sweep ? s.sweep->parameter : std::string{}; }

std::string sweep_cell(double v) { return std::isnan(v) ? std::string{} : format_value(v); }

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

const std::vector<double> kSizes{0.5, 1, 2, 4, 8, 16};
const std::vector<double> kIntervals{200, 400, 600, 800, 1000};

// Large networks vote through a fixed panel per candidate so a run stays tractable.
std::uint32_t panel_for(std::uint32_t n_nodes) { return n_nodes >= 200 ? 8 : 0; }

Scenario size_sweep(std::string name, std::uint32_t n) {
    Scenario s;
    s.name = std::move(name);
    s.base.n_nodes = n;
    s.base.block_interval = 600;
    s.base.block_delay = 0.4;
    s.base.voter_panel = panel_for(n);
    s.sweep = Sweep{"block_size_mb", kSizes};
    return s;
}

Scenario interval_sweep(std::string name, std::uint32_t n) {
    Scenario s;
    s.name = std::move(name);
    s.base.n_nodes = n;
    s.base.block_size_mb = 2;
    s.base.block_delay = 0.4;
    s.base.voter_panel = panel_for(n);
    s.sweep = Sweep{"block_interval", kIntervals};
    return s;
}

struct PresetEntry {
    const char* name;
    std::function<Scenario()> make;
};

const std::vector<PresetEntry>& presets() {
    static const std::vector<PresetEntry> table{
        {"fig7-n30", [] { return size_sweep("fig7-n30", 30); }},
        {"fig7-n200", [] { return size_sweep("fig7-n200", 200); }},
        {"fig7-n1000", [] { return size_sweep("fig7-n1000", 1000); }},
        {"fig8-n30", [] { return interval_sweep("fig8-n30", 30); }},
        {"fig8-n200", [] { return interval_sweep("fig8-n200", 200); }},
        {"fig8-n1000", [] { return interval_sweep("fig8-n1000", 1000); }},
        {"fig9-size",
         [] {
             auto s = size_sweep("fig9-size", 30);
             s.base.record_latencies = true;
             return s;
         }},
        {"fig9-interval",
         [] {
             auto s = interval_sweep("fig9-interval", 30);
             s.base.record_latencies = true;
             return s;
         }},
        {"fig10",
         [] {
             Scenario s;
             s.name = "fig10";
             s.base.n_nodes = 30;
             s.base.record_pca = true;
             s.protocols = {"pous"};
             return s;
         }},
        {"cost",
         [] {
             Scenario s;
             s.name = "cost";
             s.kind = Kind::kCost;
             s.protocols = {"pous"};
             s.replicates = 3;
             return s;
         }},
        {"pow-anchor",
         [] {
             Scenario s;
             s.name = "pow-anchor";
             s.base.n_nodes = 30;
             s.base.block_size_mb = 1;
             s.base.block_interval = 600;
             s.base.block_delay = 0.4;
             s.protocols = {"pow"};
             return s;
         }},
    };
    return table;
}

// ---------------------------------------------------------------------------
// Config files
// ---------------------------------------------------------------------------

std::size_t line_of_offset(std::string_view text, std::size_t offset) {
    offset = std::min(offset, text.size());
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

// Line of the first occurrence of "key" in the source, or 0 when absent.
std::size_t line_of_key(std::string_view text, std::string_view key) {
    const auto pos = text.find(fmt::format("\"{}\"", key));
    return pos == std::string_view::npos ? 0 : line_of_offset(text, pos);
}

std::string scalar_text(const json& v, const std::string& key) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number_unsigned()) return std::to_string(v.get<std::uint64_t>());
    if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
    if (v.is_number_float()) return format_value(v.get<double>());
    throw ConfigError(fmt::format("{}: expected a scalar value", key));
}

Scenario parse_json(std::string_view text, const std::string& source) {
    json doc;
    try {
        doc = json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        throw ConfigError(fmt::format("{}: line {}: syntax error: {}", source, line_of_offset(text, e.byte ? e.byte - 1 : 0),
                                      e.what()));
    }
    if (!doc.is_object()) throw ConfigError(fmt::format("{}: line 1: top level must be an object", source));

    auto located = [&](const std::string& key, const std::string& msg) {
        const auto line = line_of_key(text, key);
        return ConfigError(line ? fmt::format("{}: line {}: {}", source, line, msg) : fmt::format("{}: {}", source, msg));
    };

    Scenario s;
    if (auto it = doc.find("preset"); it != doc.end()) {
        if (!it->is_string()) throw located("preset", "preset: expected a preset name");
        try {
            s = preset(it->get<std::string>());
        } catch (const ConfigError& e) {
            throw located("preset", e.what());
        }
    } else {
        s.name = "custom";
    }

    for (auto it = doc.begin(); it != doc.end(); ++it) {
        const std::string& key = it.key();
        const json& v = it.value();
        try {
            if (key == "preset") {
                continue;
            } else if (key == "name") {
                if (!v.is_string()) throw ConfigError("name: expected a string");
                s.name = v.get<std::string>();
            } else if (key == "kind") {
                const auto k = v.is_string() ? v.get<std::string>() : std::string{};
                if (k == "simulation") s.kind = Kind::kSimulation;
                else if (k == "cost") s.kind = Kind::kCost;
                else throw ConfigError("kind: expected \"simulation\" or \"cost\"");
            } else if (key == "replicates") {
                s.replicates = parse_u32("replicates", scalar_text(v, key));
            } else if (key == "allow_out_of_range") {
                s.allow_out_of_range = parse_bool(key, scalar_text(v, key));
            } else if (key == "protocols") {
                if (!v.is_array()) throw ConfigError("protocols: expected an array of names");
                s.protocols.clear();
                for (const auto& p : v) {
                    if (!p.is_string()) throw ConfigError("protocols: expected an array of names");
                    s.protocols.push_back(p.get<std::string>());
                }
            } else if (key == "sweep") {
                if (v.is_null()) {
                    s.sweep.reset();
                    continue;
                }
                if (!v.is_object()) throw ConfigError("sweep: expected an object with parameter and values");
                Sweep sw;
                for (auto jt = v.begin(); jt != v.end(); ++jt) {
                    if (jt.key() == "parameter") {
                        if (!jt->is_string()) throw ConfigError("sweep.parameter: expected a field name");
                        sw.parameter = jt->get<std::string>();
                    } else if (jt.key() == "values") {
                        if (!jt->is_array()) throw ConfigError("sweep.values: expected an array of numbers");
                        for (const auto& x : *jt) {
                            if (!x.is_number()) throw ConfigError("sweep.values: expected an array of numbers");
                            sw.values.push_back(x.get<double>());
                        }
                    } else {
                        throw ConfigError(fmt::format("sweep: unknown key \"{}\"", jt.key()));
                    }
                }
                s.sweep = std::move(sw);
            } else if (key == "config") {
                if (!v.is_object()) throw ConfigError("config: expected an object of simulation fields");
                for (auto jt = v.begin(); jt != v.end(); ++jt) {
                    try {
                        if (find_field(jt.key()) == nullptr) {
                            throw ConfigError(fmt::format("config: unknown key \"{}\"", jt.key()));
                        }
                        set_field(s.base, jt.key(), scalar_text(*jt, jt.key()));
                    } catch (const ConfigError& e) {
                        throw located(jt.key(), e.what());
                    }
                }
            } else {
                throw ConfigError(fmt::format("unknown key \"{}\"", key));
            }
        } catch (const ConfigError& e) {
            const std::string what = e.what();
            if (what.rfind(source + ":", 0) == 0) throw;
            throw located(key, what);
        }
    }
    return s;
}

Scenario finish(Scenario s, std::span<const std::string> overrides) {
    for (const auto& o : overrides) apply_override(s, o);
    s.validate();
    return s;
}

// ---------------------------------------------------------------------------
// Cost curves
// ---------------------------------------------------------------------------

const std::vector<std::uint32_t> kCostEntries{16, 32, 64, 128, 256};
const std::vector<std::uint32_t> kCostUsers{30, 100, 200, 500, 1000};

std::unique_ptr<gc::ObliviousTransfer> make_ot(const sim::SimConfig& c, std::uint64_t seed) {
    if (c.ot == "dealer") return std::make_unique<gc::DealerObliviousTransfer>();
    return std::make_unique<gc::DhObliviousTransfer>(seed);
}

std::vector<CostRow> run_costs(const Scenario& scenario, std::uint64_t master) {
    const auto& c = scenario.base;
    std::vector<CostRow> rows;
    std::mt19937_64 rng(crypto::derive_seed(master, "cost"));
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    // Compute: wall time of m sequential secure comparisons, best of the replicates.
    for (std::uint32_t m : kCostEntries) {
        std::vector<std::pair<double, double>> inputs(m);
        for (auto& p : inputs) p = {unit(rng), unit(rng)};
        double best = 0.0;
        std::size_t bytes = 0;
        for (std::uint32_t rep = 0; rep < std::max<std::uint32_t>(1, scenario.replicates); ++rep) {
            auto ot = make_ot(c, crypto::derive_seed(master, "cost.ot", m));
            const auto start = std::chrono::steady_clock::now();
            std::size_t total = 0;
            for (std::uint32_t i = 0; i < m; ++i) {
                const auto r = gc::secure_compare(inputs[i].first, inputs[i].second, c.theta, c.bitwidth,
                                                  crypto::derive_seed(master, "cost.garble", i), *ot);
                total += r.cost.circuit_bytes + r.cost.ot_bytes;
            }
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            best = rep == 0 ? secs : std::min(best, secs);
            bytes = total;
        }
        rows.push_back({"compute", static_cast<double>(m), best});
        rows.push_back({"compute_bytes", static_cast<double>(m), static_cast<double>(bytes)});
    }

    // Communication: one voter's compressed-row vote matrix against one candidate.
    const ClassSet classes = ClassSet::with_count(c.n_classes);
    std::poisson_distribution<std::uint32_t> count(4.0);
    std::bernoulli_distribution extra(0.1);
    for (std::uint32_t n : kCostUsers) {
        std::vector<UserVector> voter(n), candidate(n);
        for (UserId u = 1; u <= n; ++u) {
            voter[u - 1].user = candidate[u - 1].user = u;
            voter[u - 1].counts.resize(classes.size());
            for (auto& x : voter[u - 1].counts) x = count(rng);
            candidate[u - 1].counts = voter[u - 1].counts;
            // The candidate sees a slightly different mempool.
            for (auto& x : candidate[u - 1].counts) x += extra(rng) ? 1 : 0;
        }
        const auto vm = compute_usm(voter, c.budget_max_pairs, 1);
        const auto cm = compute_usm(candidate, c.budget_max_pairs, 2);
        const auto theta = gc::FixedPoint::encode(c.theta, c.bitwidth);
        std::vector<FlatIndex> approved;
        for (const auto& e : vm.entries()) {
            const auto [k, l] = pair_of(e.index, n);
            if (k == l) continue;
            const auto other = cm.at_flat(e.index);
            if (other && gc::within_threshold(gc::FixedPoint::encode(*other, c.bitwidth),
                                              gc::FixedPoint::encode(e.value, c.bitwidth), theta)) {
                approved.push_back(e.index);
            }
        }
        rows.push_back({"communication", static_cast<double>(n),
                        static_cast<double>(binary_compressed_rows(n, approved).byte_size())});
    }
    return rows;
}

double loglog_slope(const std::vector<CostRow>& rows, std::string_view series) {
    std::vector<double> xs, ys;
    for (const auto& r : rows) {
        if (r.series == series && r.x > 0 && r.value > 0) {
            xs.push_back(std::log(r.x));
            ys.push_back(std::log(r.value));
        }
    }
    if (xs.size() < 2) return 0.0;
    const double mx = mean_of(xs), my = mean_of(ys);
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    return sxx > 0 ? sxy / sxx : 0.0;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(fmt::format("cannot open {} for writing", path.string()));
    out << content;
    out.close();
    if (!out) throw std::runtime_error(fmt::format("failed writing {}", path.string()));
}

}  // namespace

// ---------------------------------------------------------------------------
// Scenario
// ---------------------------------------------------------------------------

void Scenario::validate() const {
    if (name.empty()) throw ConfigError("name must not be empty");
    if (replicates < 1) throw ConfigError("replicates must be at least 1");
    if (protocols.empty()) throw ConfigError("protocols must name at least one of pous, pow");
    for (std::size_t i = 0; i < protocols.size(); ++i) {
        if (protocols[i] != "pous" && protocols[i] != "pow") {
            throw ConfigError(fmt::format("protocols: unknown protocol \"{}\"", protocols[i]));
        }
        if (std::find(protocols.begin(), protocols.begin() + static_cast<std::ptrdiff_t>(i), protocols[i]) !=
            protocols.begin() + static_cast<std::ptrdiff_t>(i)) {
            throw ConfigError(fmt::format("protocols: \"{}\" listed twice", protocols[i]));
        }
    }
    base.validate();
    if (!sweep) return;
    const Field* f = find_field(sweep->parameter);
    if (f == nullptr) throw ConfigError(fmt::format("sweep.parameter: unknown field \"{}\"", sweep->parameter));
    if (!f->numeric) throw ConfigError(fmt::format("sweep.parameter: field \"{}\" is not numeric", sweep->parameter));
    if (sweep->values.empty()) throw ConfigError("sweep.values must not be empty");
    for (double v : sweep->values) {
        if (!std::isfinite(v)) throw ConfigError("sweep.values must be finite");
        if (!allow_out_of_range) {
            for (const auto& r : kRanges) {
                if (f->name == std::string_view(r.field) && (v < r.lo || v > r.hi)) {
                    throw ConfigError(fmt::format("sweep.values: {} = {} outside the published range [{}, {}] "
                                                  "(set allow_out_of_range to permit it)",
                                                  f->name, v, r.lo, r.hi));
                }
            }
        }
        sim::SimConfig probe = base;
        f->set(probe, format_value(v));
        try {
            probe.validate();
        } catch (const ConfigError& e) {
            throw ConfigError(fmt::format("sweep value {} = {}: {}", f->name, v, e.what()));
        }
    }
}

std::vector<double> Scenario::sweep_points() const {
    if (!sweep) return {std::nan("")};
    return sweep->values;
}

std::vector<std::string> preset_names() {
    std::vector<std::string> names;
    for (const auto& p : presets()) names.emplace_back(p.name);
    return names;
}

Scenario preset(std::string_view name) {
    for (const auto& p : presets()) {
        if (name == p.name) return p.make();
    }
    throw ConfigError(fmt::format("unknown preset \"{}\" (known: {})", name, fmt::join(preset_names(), ", ")));
}

void apply_override(Scenario& scenario, std::string_view key, std::string_view value) {
    key = trim(key);
    if (key == "replicates") {
        scenario.replicates = parse_u32(key, value);
    } else if (key == "protocols") {
        scenario.protocols = split(value, ',');
    } else if (key == "name") {
        scenario.name = std::string(trim(value));
    } else if (key == "allow_out_of_range") {
        scenario.allow_out_of_range = parse_bool(key, value);
    } else if (key == "sweep") {
        // sweep=parameter:v1,v2,... or sweep=none
        value = trim(value);
        if (value == "none") {
            scenario.sweep.reset();
            return;
        }
        const auto colon = value.find(':');
        if (colon == std::string_view::npos) throw ConfigError("sweep: expected parameter:v1,v2,...");
        Sweep sw{std::string(trim(value.substr(0, colon))), {}};
        for (const auto& part : split(value.substr(colon + 1), ',')) sw.values.push_back(parse_double("sweep", part));
        scenario.sweep = std::move(sw);
    } else {
        if (find_field(key) == nullptr) throw ConfigError(fmt::format("unknown field \"{}\"", key));
        set_field(scenario.base, key, value);
        // Overriding the swept field pins it: the sweep would otherwise ignore the override.
        if (scenario.sweep && find_field(scenario.sweep->parameter) == find_field(key)) scenario.sweep.reset();
    }
}

void apply_override(Scenario& scenario, std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos || trim(assignment.substr(0, eq)).empty()) {
        throw ConfigError(fmt::format("override \"{}\" is not of the form key=value", assignment));
    }
    apply_override(scenario, assignment.substr(0, eq), assignment.substr(eq + 1));
}

void apply_fast_mode(Scenario& scenario) {
    scenario.replicates = std::min(scenario.replicates, kFastReplicates);
}

Scenario load_config_text(std::string_view text, std::span<const std::string> overrides) {
    return finish(parse_json(text, "<config>"), overrides);
}

Scenario load_config(const std::filesystem::path& path, std::span<const std::string> overrides) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(fmt::format("{}: cannot open file", path.string()));
    std::ostringstream buf;
    buf << in.rdbuf();
    return finish(parse_json(buf.str(), path.string()), overrides);
}

Scenario resolve(std::string_view name_or_path, std::span<const std::string> overrides) {
    for (const auto& p : presets()) {
        if (name_or_path == p.name) return finish(p.make(), overrides);
    }
    const std::filesystem::path path{std::string(name_or_path)};
    if (std::filesystem::exists(path)) return load_config(path, overrides);
    throw ConfigError(fmt::format("\"{}\" is neither a preset nor a readable file (presets: {})", name_or_path,
                                  fmt::join(preset_names(), ", ")));
}

std::uint64_t cell_seed(std::uint64_t master, std::string_view protocol, double sweep_value,
                        std::uint32_t replicate) {
    const auto h = crypto::derive_seed(master, fmt::format("cell.{}", protocol), value_bits(sweep_value));
    return crypto::derive_seed(h, "replicate", replicate);
}

std::uint64_t workload_seed(std::uint64_t master, double sweep_value, std::uint32_t replicate) {
    const auto h = crypto::derive_seed(master, "workload", value_bits(sweep_value));
    const auto s = crypto::derive_seed(h, "replicate", replicate);
    return s == 0 ? 1 : s;  // 0 would mean "derive from the cell seed"
}

sim::SimConfig config_for_cell(const Scenario& scenario, std::uint64_t master, std::string_view protocol,
                               double sweep_value, std::uint32_t replicate) {
    sim::SimConfig c = scenario.base;
    if (scenario.sweep) set_field(c, scenario.sweep->parameter, format_value(sweep_value));
    c.seed = cell_seed(master, protocol, sweep_value, replicate);
    c.workload_seed = workload_seed(master, sweep_value, replicate);
    c.validate();
    return c;
}

CellResult run_cell(const Scenario& scenario, std::uint64_t master, std::string_view protocol, double sweep_value,
                    std::uint32_t replicate) {
    CellResult cell;
    cell.protocol = std::string(protocol);
    cell.sweep_value = sweep_value;
    cell.replicate = replicate;
    try {
        const auto config = config_for_cell(scenario, master, protocol, sweep_value, replicate);
        cell.seed = config.seed;
        if (protocol == "pous") cell.metrics = sim::run_pous(config);
        else if (protocol == "pow") cell.metrics = sim::run_pow(config);
        else throw ConfigError(fmt::format("unknown protocol \"{}\"", protocol));
    } catch (const std::exception& e) {
        throw ConfigError(fmt::format("cell (protocol={}, {}={}, replicate={}) failed: {}", protocol,
                                      scenario.sweep ? scenario.sweep->parameter : "sweep",
                                      sweep_cell(sweep_value), replicate, e.what()));
    }
    return cell;
}

std::vector<Aggregate> aggregate(const Scenario& scenario, std::span<const CellResult> cells) {
    std::vector<Aggregate> out;
    const auto points = scenario.sweep_points();
    auto same_point = [](double a, double b) { return value_bits(a) == value_bits(b); };
    auto collect = [&](const std::string& protocol, double point) {
        std::vector<const CellResult*> found;
        for (const auto& c : cells) {
            if (c.protocol == protocol && same_point(c.sweep_value, point)) found.push_back(&c);
        }
        return found;
    };
    for (const auto& protocol : scenario.protocols) {
        for (double point : points) {
            const auto mine = collect(protocol, point);
            Aggregate a;
            a.protocol = protocol;
            a.sweep_value = point;
            a.cells = static_cast<std::uint32_t>(mine.size());
            std::vector<double> tps, lat;
            for (const auto* c : mine) {
                tps.push_back(c->metrics.tps);
                lat.push_back(c->metrics.mean_latency);
            }
            a.tps_mean = mean_of(tps);
            a.tps_sd = sd_of(tps);
            a.latency_mean = mean_of(lat);
            a.latency_sd = sd_of(lat);
            if (protocol == "pous") {
                // Pair replicates by index: both protocols ran on the same workload seed.
                const auto pow = collect("pow", point);
                std::vector<double> pt, wt, pl, wl;
                for (const auto* c : mine) {
                    for (const auto* w : pow) {
                        if (w->replicate != c->replicate) continue;
                        pt.push_back(c->metrics.tps);
                        wt.push_back(w->metrics.tps);
                        pl.push_back(c->metrics.mean_latency);
                        wl.push_back(w->metrics.mean_latency);
                    }
                }
                const double pow_tps = mean_of(wt), pow_lat = mean_of(wl);
                if (pow_tps > 0) a.tps_improvement_pct = (mean_of(pt) - pow_tps) / pow_tps * 100.0;
                if (pow_lat > 0) a.latency_reduction_pct = (pow_lat - mean_of(pl)) / pow_lat * 100.0;
            }
            out.push_back(a);
        }
    }
    return out;
}

RunReport run_scenario(const Scenario& scenario, const RunOptions& options) {
    scenario.validate();
    RunReport report;
    report.scenario = scenario;
    report.master_seed = options.master_seed;

    if (scenario.kind == Kind::kCost) {
        report.costs = run_costs(scenario, options.master_seed);
        return report;
    }

    struct Job {
        std::string protocol;
        double point;
        std::uint32_t replicate;
    };
    std::vector<Job> jobs;
    for (const auto& protocol : scenario.protocols) {
        for (double point : scenario.sweep_points()) {
            for (std::uint32_t r = 0; r < scenario.replicates; ++r) jobs.push_back({protocol, point, r});
        }
    }

    report.cells.resize(jobs.size());
    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr error;
    auto worker = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= jobs.size()) return;
            {
                std::lock_guard lock(error_mutex);
                if (error) return;
            }
            try {
                report.cells[i] =
                    run_cell(scenario, options.master_seed, jobs[i].protocol, jobs[i].point, jobs[i].replicate);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };
    const unsigned workers = std::max(1u, std::min<unsigned>(options.jobs, static_cast<unsigned>(jobs.size())));
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    }
    if (error) std::rethrow_exception(error);

    report.aggregates = aggregate(scenario, report.cells);
    for (const auto& c : report.cells) {
        if (c.protocol == "pous" && !c.metrics.pca.empty()) {
            report.pca = c.metrics.pca;
            break;
        }
    }
    return report;
}

std::string cell_csv_row(const Scenario& scenario, const CellResult& cell) {
    const auto& m = cell.metrics;
    return fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}", cell.protocol, sweep_param(scenario),
                       sweep_cell(cell.sweep_value), cell.replicate, cell.seed,
                       config_for_cell(scenario, 0, cell.protocol, cell.sweep_value, 0).n_nodes, m.generated,
                       m.confirmed_tx_count, m.tps, m.mean_latency, m.p50_latency, m.p90_latency, m.blocks, m.rounds,
                       m.aborts, m.crypto_compares, m.crypto_bytes, m.functionality_ok, m.functionality_rounds);
}

std::string aggregate_csv_row(const Scenario& scenario, const Aggregate& a) {
    return fmt::format("{},{},{},{},{},{},{},{},{},{}", a.protocol, sweep_param(scenario), sweep_cell(a.sweep_value),
                       a.cells, a.tps_mean, a.tps_sd, a.latency_mean, a.latency_sd, a.tps_improvement_pct,
                       a.latency_reduction_pct);
}

std::vector<std::filesystem::path> emit(const RunReport& report, const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw std::runtime_error(fmt::format("cannot create {}: {}", out_dir.string(), ec.message()));

    std::string cells = std::string(kCellCsvHeader) + "\n";
    for (const auto& c : report.cells) cells += cell_csv_row(report.scenario, c) + "\n";
    std::string aggregates = std::string(kAggregateCsvHeader) + "\n";
    for (const auto& a : report.aggregates) aggregates += aggregate_csv_row(report.scenario, a) + "\n";
    std::string pca = "tx_id,pc1,pc2,cluster,selected\n";
    for (const auto& p : report.pca) {
        pca += fmt::format("{},{},{},{},{}\n", p.tx_id, p.x, p.y, p.cluster, p.selected ? 1 : 0);
    }
    std::string costs = "series,x,value\n";
    for (const auto& r : report.costs) costs += fmt::format("{},{},{}\n", r.series, r.x, r.value);

    const std::vector<std::pair<std::string, std::string>> files{
        {"cells.csv", cells},   {"aggregate.csv", aggregates},       {"pca.csv", pca},
        {"costs.csv", costs},   {"summary.txt", summary_text(report)},
    };
    std::vector<std::filesystem::path> written;
    for (const auto& [name, content] : files) {
        const auto path = out_dir / name;
        write_file(path, content);
        written.push_back(path);
    }
    return written;
}

std::string summary_text(const RunReport& report) {
    const auto& s = report.scenario;
    std::string out = fmt::format("scenario: {}\nmaster seed: {}\nreplicates: {}\n", s.name, report.master_seed,
                                  s.replicates);
    if (s.sweep) out += fmt::format("sweep: {} over {} points\n", s.sweep->parameter, s.sweep->values.size());

    if (!report.aggregates.empty()) {
        out += "\nprotocol  point  tps_mean  tps_sd  latency_mean  latency_sd\n";
        for (const auto& a : report.aggregates) {
            out += fmt::format("{:<8}  {:>5}  {:>8.3f}  {:>6.3f}  {:>12.1f}  {:>10.1f}\n", a.protocol,
                               std::isnan(a.sweep_value) ? std::string{"-"} : format_value(a.sweep_value), a.tps_mean,
                               a.tps_sd, a.latency_mean, a.latency_sd);
        }
    }

    std::vector<double> improvements, reductions;
    std::size_t ahead = 0;
    for (const auto& a : report.aggregates) {
        if (a.protocol != "pous") continue;
        bool paired = false;
        for (const auto& b : report.aggregates) {
            if (b.protocol == "pow" && value_bits(b.sweep_value) == value_bits(a.sweep_value)) {
                paired = true;
                if (a.tps_mean >= b.tps_mean) ++ahead;
            }
        }
        if (!paired) continue;
        improvements.push_back(a.tps_improvement_pct);
        reductions.push_back(a.latency_reduction_pct);
    }
    if (!improvements.empty()) {
        out += fmt::format("\nthroughput: PoUS mean TPS improvement over PoW {:.2f}% (PoUS >= PoW at {} of {} points)\n",
                           mean_of(improvements), ahead, improvements.size());
        out += fmt::format("latency: PoUS mean latency reduction versus PoW {:.2f}%\n", mean_of(reductions));
    }

    std::uint64_t ok = 0, rounds = 0;
    for (const auto& c : report.cells) {
        ok += c.metrics.functionality_ok;
        rounds += c.metrics.functionality_rounds;
    }
    if (rounds > 0) {
        out += fmt::format("functionality: packed transactions at least as close to their centroids as the mempool "
                           "in {} of {} rounds ({:.1f}%)\n",
                           ok, rounds, 100.0 * static_cast<double>(ok) / static_cast<double>(rounds));
    }
    if (!report.pca.empty()) out += fmt::format("pca: {} transactions projected\n", report.pca.size());

    if (!report.costs.empty()) {
        double max_bytes = 0.0;
        for (const auto& r : report.costs) {
            if (r.series == "communication") max_bytes = std::max(max_bytes, r.value);
        }
        out += fmt::format("\ncost: 2PC compute time log-log slope {:.3f}\n", loglog_slope(report.costs, "compute"));
        out += fmt::format("cost: largest compressed-row vote matrix {} bytes\n", max_bytes);
    }
    return out;
}

}  // namespace pous::scenario
