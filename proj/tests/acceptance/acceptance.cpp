// Runs the project's acceptance criteria and prints one PASS/FAIL line each.
// Usage: pous_acceptance [criterion numbers...]   (default: all)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <fmt/core.h>

#include "pous/bts.hpp"
#include "pous/committee.hpp"
#include "pous/garbled2pc.hpp"
#include "pous/packing.hpp"
#include "pous/scenario.hpp"

using namespace pous;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

unsigned jobs() { return std::max(1u, std::thread::hardware_concurrency()); }

scenario::RunReport run_fast(const std::string& name) {
    auto s = scenario::preset(name);
    scenario::apply_fast_mode(s);
    return scenario::run_scenario(s, scenario::RunOptions{1, jobs()});
}

const scenario::Aggregate& row(const scenario::RunReport& r, const std::string& protocol, double point) {
    for (const auto& a : r.aggregates) {
        if (a.protocol == protocol && a.sweep_value == point) return a;
    }
    throw std::logic_error("missing aggregate row");
}

double r_squared(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (syy == 0) return 1.0;
    return sxy * sxy / (sxx * syy);
}

double slope(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    return sxy / sxx;
}

double chi_square_p(const std::vector<std::vector<double>>& table) {
    const std::size_t rows = table.size(), cols = table[0].size();
    std::vector<double> rs(rows, 0), cs(cols, 0);
    double total = 0;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            rs[r] += table[r][c];
            cs[c] += table[r][c];
            total += table[r][c];
        }
    }
    double chi = 0;
    std::size_t used_cols = 0;
    for (std::size_t c = 0; c < cols; ++c) {
        if (cs[c] == 0) continue;
        ++used_cols;
        for (std::size_t r = 0; r < rows; ++r) {
            const double e = rs[r] * cs[c] / total;
            chi += (table[r][c] - e) * (table[r][c] - e) / e;
        }
    }
    if (used_cols < 2) return 1.0;
    boost::math::chi_squared dist(static_cast<double>((rows - 1) * (used_cols - 1)));
    return boost::math::cdf(boost::math::complement(dist, chi));
}

Outcome pow_anchor() {
    const auto r = run_fast("pow-anchor");
    const double tps = r.aggregates.at(0).tps_mean;
    return {tps >= 5.6 && tps <= 8.4, fmt::format("PoW TPS {:.3f}, band [5.6, 8.4]", tps)};
}

Outcome improvement() {
    bool every_point = true;
    double sum = 0;
    int count = 0;
    std::string detail;
    for (const char* name : {"fig7-n30", "fig7-n200", "fig7-n1000", "fig8-n30", "fig8-n200", "fig8-n1000"}) {
        const auto r = run_fast(name);
        int below = 0;
        double preset_sum = 0;
        for (double v : r.scenario.sweep_points()) {
            const auto& p = row(r, "pous", v);
            const auto& w = row(r, "pow", v);
            if (p.tps_mean < w.tps_mean) {
                every_point = false;
                ++below;
            }
            preset_sum += p.tps_improvement_pct;
            sum += p.tps_improvement_pct;
            ++count;
        }
        const auto n = r.scenario.sweep_points().size();
        detail += fmt::format("{}: mean {:+.2f}%, {} of {} points below PoW; ", name,
                              preset_sum / static_cast<double>(n), below, n);
    }
    const double mean = sum / count;
    detail += fmt::format("overall mean improvement {:.2f}% (band [5, 40])", mean);
    return {every_point && mean >= 5.0 && mean <= 40.0, detail};
}

Outcome latency() {
    bool below_everywhere = true;
    std::string detail;
    double pous_r2 = 0, pow_r2 = 0;
    for (const char* name : {"fig9-size", "fig9-interval"}) {
        const auto r = run_fast(name);
        int worse = 0;
        std::vector<double> x, yp, yw;
        for (double v : r.scenario.sweep_points()) {
            const auto& p = row(r, "pous", v);
            const auto& w = row(r, "pow", v);
            if (!(p.latency_mean < w.latency_mean)) {
                below_everywhere = false;
                ++worse;
            }
            x.push_back(v);
            yp.push_back(p.latency_mean);
            yw.push_back(w.latency_mean);
        }
        detail += fmt::format("{}: PoUS not below PoW at {} of {} points; ", name, worse, x.size());
        if (std::string(name) == "fig9-interval") {
            pous_r2 = r_squared(x, yp);
            pow_r2 = r_squared(x, yw);
        }
    }
    detail += fmt::format("R2 vs interval PoUS {:.4f} (>= 0.95), PoW {:.4f} (<= PoUS - 0.05)", pous_r2, pow_r2);
    return {below_everywhere && pous_r2 >= 0.95 && pow_r2 <= pous_r2 - 0.05, detail};
}

Outcome comparator() {
    gc::DealerObliviousTransfer ot;
    const unsigned bits = 8;
    const double theta = 0.4;
    const auto theta_fp = gc::FixedPoint::encode(theta, bits);
    std::uint64_t mismatches = 0;
    for (std::uint32_t a = 0; a < 256; ++a) {
        for (std::uint32_t b = 0; b < 256; ++b) {
            const gc::FixedPoint fa{a, bits}, fb{b, bits};
            // Plaintext predicate on the 8-bit grid: |a - b| <= theta.
            const std::uint32_t diff = a > b ? a - b : b - a;
            const bool want = diff <= theta_fp.raw;
            const auto got = gc::secure_compare(fa.decode(), fb.decode(), theta, bits, (a << 8) | b, ot);
            if (got.within != want) ++mismatches;
        }
    }
    return {mismatches == 0, fmt::format("65536 pairs, {} mismatches", mismatches)};
}

Outcome oblivious_transfer() {
    gc::DhObliviousTransfer ot(2024);
    crypto::HashDrbg rng(2025, "acceptance");
    std::mt19937_64 coin(2026);
    std::uint64_t wrong = 0, leaked = 0;
    std::vector<std::vector<double>> nibble(2, std::vector<double>(16, 0));
    std::vector<std::vector<double>> parity(2, std::vector<double>(2, 0));
    std::vector<std::vector<double>> payload(2, std::vector<double>(16, 0));
    for (int i = 0; i < 1000; ++i) {
        const bool bit = coin() & 1;
        std::vector<gc::WirePair> pairs{gc::random_wire_pair(rng)};
        gc::OtTranscript t;
        const auto probe = ot.transfer_with_probe(pairs, {bit}, &t);
        if (probe[0].chosen != pairs[0].of(bit)) ++wrong;
        if (probe[0].unchosen_attempt == pairs[0].of(!bit)) ++leaked;
        const auto& msg = t.receiver_choice.at(0);
        nibble[bit][msg.at(1) >> 4] += 1;
        parity[bit][msg.at(0) & 1] += 1;
        payload[bit][t.sender_payload.at(0).at(0) >> 4] += 1;
    }
    const double p1 = chi_square_p(nibble), p2 = chi_square_p(parity), p3 = chi_square_p(payload);
    const double p = std::min({p1, p2, p3});
    return {wrong == 0 && leaked == 0 && p > 0.01,
            fmt::format("1000 sessions, {} wrong keys, {} unchosen keys recovered, chi-square p = {:.3f} / "
                        "{:.3f} / {:.3f} (each > 0.01)",
                        wrong, leaked, p1, p2, p3)};
}

Outcome incentive() {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0, 1);
    int samples = 0, violations = 0;
    while (samples < 1000) {
        double p0 = u(rng), p1 = u(rng);
        if (p0 > p1) std::swap(p0, p1);
        if (!(p0 > 0 && p1 < 1 && p0 < p1)) continue;
        const double y = p0 + (p1 - p0) * (0.001 + 0.998 * u(rng));
        ++samples;
        // Signal 1 holder believes p1, signal 0 holder believes p0; each compares truthful and flipped votes.
        if (!(bts::expected_total_score(p1, true, p1, y) > bts::expected_total_score(p1, false, p1, y))) ++violations;
        if (!(bts::expected_total_score(p0, false, p0, y) > bts::expected_total_score(p0, true, p0, y))) ++violations;
    }
    double worst = 0;
    for (int i = 0; i < 10000; ++i) {
        const double p = u(rng), y = u(rng);
        worst = std::max(worst, std::abs(bts::expected_scores(p, y).loss - (p - y) * (p - y)));
    }
    return {violations == 0 && worst <= 1e-12,
            fmt::format("{} samples, {} violations; identity max error {:.2e} over 10000 pairs", samples, violations,
                        worst)};
}

committee::MemberTally tally_value(std::uint8_t tag) {
    committee::MemberTally t;
    t.leader = tag;
    t.digest.fill(tag);
    return t;
}

// One round: Byzantine members send any alphabet symbol to each honest member.
// Returns false on a conflict between honest decisions or an honest decision other
// than the honest value.
bool round_safe(std::uint32_t size, const std::vector<bool>& byz, const std::vector<std::uint8_t>& sent,
                std::uint64_t* commits, std::uint64_t* aborts) {
    const auto honest = tally_value(1);
    std::optional<committee::MemberTally> first;
    std::size_t h = 0;
    const std::uint32_t n_honest = static_cast<std::uint32_t>(std::count(byz.begin(), byz.end(), false));
    for (std::uint32_t member = 0; member < size; ++member) {
        if (byz[member]) continue;
        std::vector<committee::MemberTally> received;
        std::size_t b = 0;
        for (std::uint32_t from = 0; from < size; ++from) {
            received.push_back(byz[from] ? tally_value(sent[b++ * n_honest + h]) : honest);
        }
        const auto d = committee::agree_on(received, size);
        if (d) {
            ++*commits;
            if (*d != honest) return false;
            if (first && *first != *d) return false;
            first = d;
        } else {
            ++*aborts;
        }
        ++h;
    }
    return true;
}

Outcome committee_safety() {
    std::uint64_t exhaustive = 0, unsafe = 0, commits = 0, aborts = 0;
    for (std::uint32_t size = 4; size <= 7; ++size) {
        for (std::uint32_t f = 0; 3 * f < size; ++f) {
            std::vector<bool> byz(size, false);
            std::fill(byz.end() - f, byz.end(), true);
            do {
                const std::uint32_t slots = f * (size - f);
                std::uint64_t combos = 1;
                for (std::uint32_t s = 0; s < slots; ++s) combos *= 3;
                for (std::uint64_t code = 0; code < combos; ++code) {
                    std::vector<std::uint8_t> sent(slots);
                    std::uint64_t c = code;
                    for (auto& v : sent) {
                        v = static_cast<std::uint8_t>(1 + c % 3);
                        c /= 3;
                    }
                    ++exhaustive;
                    if (!round_safe(size, byz, sent, &commits, &aborts)) ++unsafe;
                }
            } while (std::next_permutation(byz.begin(), byz.end()));
        }
    }
    // Randomized rounds: random size, fault set below one third and equivocation.
    std::mt19937_64 rng(99);
    std::uint64_t random_unsafe = 0, random_commit = 0, random_abort = 0;
    for (int round = 0; round < 10000; ++round) {
        const std::uint32_t size = 4 + rng() % 4;
        const std::uint32_t f = static_cast<std::uint32_t>(rng() % ((size - 1) / 3 + 1));
        std::vector<bool> byz(size, false);
        std::fill(byz.begin(), byz.begin() + f, true);
        std::shuffle(byz.begin(), byz.end(), rng);
        std::vector<std::uint8_t> sent(static_cast<std::size_t>(f) * (size - f));
        for (auto& v : sent) v = static_cast<std::uint8_t>(1 + rng() % 5);
        if (!round_safe(size, byz, sent, &random_commit, &random_abort)) ++random_unsafe;
    }
    return {unsafe == 0 && random_unsafe == 0 && random_abort == 0,
            fmt::format("{} exhaustive fault patterns, {} unsafe; 10000 random rounds, {} unsafe, "
                        "{} honest commits, {} aborts",
                        exhaustive, unsafe, random_unsafe, random_commit, random_abort)};
}

Outcome flag_field() {
    const std::vector<std::uint32_t> sizes{5, 3, 2, 1};
    const auto f = packing::encode_flag(sizes, 11);
    const bool exact = f.to_string() == "10000100101";
    std::mt19937_64 rng(43);
    int ok = 0;
    for (int i = 0; i < 10000; ++i) {
        const std::uint32_t capacity = 1 + rng() % 500;
        const std::uint32_t body = 1 + rng() % capacity;
        std::vector<std::uint32_t> layout;
        for (std::uint32_t left = body; left > 0;) {
            const std::uint32_t s = 1 + rng() % left;
            layout.push_back(s);
            left -= s;
        }
        const auto enc = packing::encode_flag(layout, capacity);
        if (packing::cluster_sizes(packing::FlagField::from_bytes(enc.to_bytes(), capacity), body) == layout) ++ok;
    }
    return {exact && ok == 10000, fmt::format("layout (5,3,2,1) in 11 slots gives {}; {}/10000 roundtrips", f.to_string(), ok)};
}

Outcome functionality() {
    const auto r = run_fast("fig10");
    std::uint64_t ok = 0, rounds = 0;
    for (const auto& c : r.cells) {
        ok += c.metrics.functionality_ok;
        rounds += c.metrics.functionality_rounds;
    }
    double vx = 0, vy = 0, mx = 0, my = 0;
    for (const auto& p : r.pca) {
        mx += p.x;
        my += p.y;
    }
    const double n = static_cast<double>(r.pca.size());
    mx /= n;
    my /= n;
    for (const auto& p : r.pca) {
        vx += (p.x - mx) * (p.x - mx);
        vy += (p.y - my) * (p.y - my);
    }
    const double frac = rounds ? static_cast<double>(ok) / static_cast<double>(rounds) : 0.0;
    return {frac >= 0.9 && !r.pca.empty() && vx >= vy,
            fmt::format("packed centroid distance <= mempool mean in {}/{} rounds ({:.1f}%, need >= 90%); "
                        "PCA rows {}, PC1 var {:.4g} >= PC2 var {:.4g}",
                        ok, rounds, frac * 100, r.pca.size(), vx / n, vy / n)};
}

Outcome cost() {
    auto s = scenario::preset("cost");
    const auto r = scenario::run_scenario(s, scenario::RunOptions{1, 1});
    std::vector<double> lx, ly;
    double max_bytes = 0, max_n = 0;
    for (const auto& c : r.costs) {
        if (c.series == "compute") {
            lx.push_back(std::log(c.x));
            ly.push_back(std::log(c.value));
        } else if (c.series == "communication") {
            max_n = std::max(max_n, c.x);
            if (c.x <= 1000) max_bytes = std::max(max_bytes, c.value);
        }
    }
    const double k = slope(lx, ly);
    return {lx.size() >= 2 && k <= 1.2 && max_bytes <= 25000,
            fmt::format("log-log compute slope {:.3f} (<= 1.2); largest vote matrix {} bytes at n <= {} (<= 25000)",
                        k, max_bytes, max_n)};
}

Outcome determinism() {
    int identical = 0, total = 0;
    for (const char* name : {"fig7-n30", "fig8-n200", "fig10"}) {
        auto s = scenario::preset(name);
        scenario::apply_fast_mode(s);
        const double point = s.sweep_points().front();
        for (const auto& protocol : s.protocols) {
            const auto a = scenario::run_cell(s, 1, protocol, point, 3);
            const auto b = scenario::run_cell(s, 1, protocol, point, 3);
            ++total;
            if (scenario::cell_csv_row(s, a) == scenario::cell_csv_row(s, b) && a.metrics.same_outcome(b.metrics)) {
                ++identical;
            }
        }
    }
    return {identical == total, fmt::format("{}/{} re-run cells byte-identical", identical, total)};
}

struct Criterion {
    int id;
    const char* name;
    double budget_seconds;  // 0: no time limit
    std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> all{
        {1, "pow sanity anchor", 120, pow_anchor},
        {2, "relative throughput improvement", 900, improvement},
        {3, "confirmation latency", 600, latency},
        {4, "garbled comparator exactness", 300, comparator},
        {5, "oblivious transfer correctness and blindness", 0, oblivious_transfer},
        {6, "bts incentive compatibility", 0, incentive},
        {7, "committee safety and liveness", 0, committee_safety},
        {8, "flag field", 0, flag_field},
        {9, "packing functionality", 0, functionality},
        {10, "cost envelope", 0, cost},
        {11, "determinism", 0, determinism},
    };
    std::set<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

    int failures = 0;
    for (const auto& c : all) {
        if (!wanted.empty() && !wanted.count(c.id)) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, fmt::format("error: {}", e.what())};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (c.budget_seconds > 0 && secs > c.budget_seconds) {
            o.pass = false;
            o.detail += fmt::format("; over time budget of {:.0f} s", c.budget_seconds);
        }
        if (!o.pass) ++failures;
        fmt::print("{} [{:2}] {} ({:.1f} s): {}\n", o.pass ? "PASS" : "FAIL", c.id, c.name, secs, o.detail);
        std::fflush(stdout);
    }
    fmt::print("{} criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
