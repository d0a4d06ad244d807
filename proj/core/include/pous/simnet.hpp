#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "pous/committee.hpp"
#include "pous/packing.hpp"
#include "pous/similarity.hpp"

namespace pous::sim {

inline constexpr double kBytesPerMb = 1024.0 * 1024.0;

struct SimConfig {
    std::uint32_t n_nodes = 30;
    double sim_time = 10000.0;        // s
    std::uint32_t tx_size = 250;      // bytes
    double tx_delay = 0.5;            // s, per-transaction transmission cost
    double block_size_mb = 1.0;
    double block_interval = 600.0;    // s
    double block_delay = 0.4;         // s
    double block_reward = 6.25;

    // Workload: per node and per generation epoch, a Normal(mean, sigma) transaction count.
    double link_delay_mean = 0.4;
    double link_delay_sigma = 1.0;
    double tx_count_mean = 30.0;
    double tx_count_sigma = 1.0;
    double fee_mean = 0.000062;
    double fee_sigma = 1.0;
    double tx_epoch = 120.0;          // s
    std::uint32_t n_classes = 6;

    // PoUS protocol.
    double theta = 0.4;
    std::uint32_t eta = 1;
    packing::PriorityWeights weights;
    std::uint32_t kmeans_k = 3;
    double power_min = 0.0;
    double power_max = 100.0;
    std::uint64_t budget_max_pairs = 256;  // pairs a node of power 100 computes per round
    std::uint32_t voter_panel = 0;         // voters per candidate; 0 = every other miner
    std::uint32_t committee_size = 7;
    std::uint32_t rotation_period = 5;
    double honest_fraction = 1.0;
    committee::WindowSplit windows;
    unsigned bitwidth = 16;
    std::uint32_t crypto_samples_per_round = 2;  // entries per round sent through the full 2PC
    std::string ot = "dh";                       // "dh" or "dealer"

    std::uint64_t seed = 1;
    std::uint64_t workload_seed = 0;  // 0: derive from seed
    bool record_trace = false;
    bool record_latencies = false;
    bool record_pca = false;
    std::uint64_t pca_round = 0;      // PoUS round whose packing is projected; 0 = middle round

    std::uint32_t block_capacity() const;
    void validate() const;
};

/// Workload and network realisation shared by both protocols for a given seed.
struct Workload {
    std::vector<Transaction> transactions;          // sorted by (submit_time, id)
    std::vector<float> link_delay;                  // n x n, row = sender
    std::vector<double> power;                      // per node, in [power_min, power_max]
    std::uint32_t n_nodes = 0;

    double delay(UserId from, UserId to) const;
    double arrival(const Transaction& tx, UserId node, double tx_delay) const;
};

Workload gen_workload(const SimConfig& config, std::uint64_t seed);

enum class EventKind : std::uint8_t {
    kTxCreate,
    kTxArrive,
    kMiningDeadline,
    kVoteExchange,
    kVoteSubmit,
    kCountDeadline,
    kBlockProposed,
    kBlockArrive,
    kRoundAbort,
};

const char* to_string(EventKind kind);

struct Event {
    double time = 0.0;
    std::uint64_t sequence = 0;
    EventKind kind = EventKind::kTxCreate;
    std::uint64_t round = 0;
    std::uint32_t node = 0;
};

/// Time-ordered queue; FIFO among equal timestamps by insertion sequence.
class EventQueue {
public:
    void push(double time, EventKind kind, std::uint64_t round = 0, std::uint32_t node = 0);
    bool empty() const { return heap_.empty(); }
    const Event& top() const { return heap_.front(); }
    Event pop();
    std::size_t size() const { return heap_.size(); }

private:
    std::vector<Event> heap_;
    std::uint64_t next_sequence_ = 0;
};

struct PcaRow {
    std::uint64_t tx_id = 0;
    double x = 0.0;
    double y = 0.0;
    std::uint32_t cluster = 0;
    bool selected = false;
};

struct RoundRecord {
    std::uint64_t round = 0;
    MinerId leader = 0;
    bool aborted = false;
    std::uint32_t quorum = 0;
    std::uint32_t block_txs = 0;
    double commit_time = 0.0;
    double selected_centroid_distance = 0.0;
    double mempool_centroid_distance = 0.0;
};

struct Metrics {
    std::string protocol;
    std::uint64_t generated = 0;
    std::uint64_t confirmed_tx_count = 0;
    std::uint64_t pending_at_end = 0;
    double sim_time = 0.0;
    double tps = 0.0;
    double mean_latency = 0.0;
    double p50_latency = 0.0;
    double p90_latency = 0.0;
    double p99_latency = 0.0;
    std::uint64_t blocks = 0;
    std::uint64_t rounds = 0;
    std::uint64_t aborts = 0;
    double fee_total = 0.0;
    std::vector<RoundRecord> round_log;

    // 2PC accounting. Counts and bytes are deterministic; wall time is not and is
    // kept out of equality and CSV output.
    std::uint64_t crypto_compares = 0;
    std::uint64_t crypto_bytes = 0;
    std::uint64_t crypto_mismatches = 0;
    std::uint64_t vote_matrix_bytes = 0;  // compressed-row vote matrices, summed
    double crypto_wall_seconds = 0.0;

    std::uint64_t functionality_rounds = 0;
    std::uint64_t functionality_ok = 0;

    std::vector<double> latencies;  // when record_latencies
    std::vector<PcaRow> pca;
    std::vector<std::string> trace;  // when record_trace

    /// Deterministic fields only.
    bool same_outcome(const Metrics& other) const;
};

/// Latency per committed transaction: commit time minus submit time. Needs a run with
/// record_latencies set; otherwise the list is empty.
std::vector<double> confirmation_latency(const Metrics& metrics);

Metrics run_pous(const SimConfig& config);
Metrics run_pous(const SimConfig& config, const Workload& workload);
Metrics run_pow(const SimConfig& config);
Metrics run_pow(const SimConfig& config, const Workload& workload);

/// Recomputes confirmed count, TPS and mean latency from a trace.
struct ReplaySummary {
    std::uint64_t created = 0;
    std::uint64_t confirmed = 0;
    std::uint64_t blocks = 0;
    double sim_time = 0.0;
    double tps = 0.0;
    double mean_latency = 0.0;
};

ReplaySummary replay_trace(std::istream& in);

}  // namespace pous::sim
