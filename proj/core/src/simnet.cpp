#include "pous/simnet.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include <fmt/format.h>

#include "pous/bts.hpp"
#include "pous/errors.hpp"
#include "pous/garbled2pc.hpp"

namespace pous::sim {

std::uint32_t SimConfig::block_capacity() const {
    return static_cast<std::uint32_t>(std::floor(block_size_mb * kBytesPerMb / tx_size));
}

void SimConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError(msg); };
    auto positive = [&](double v, const char* name) {
        if (!(v > 0.0) || !std::isfinite(v)) fail(fmt::format("{} must be positive (got {})", name, v));
    };
    auto nonnegative = [&](double v, const char* name) {
        if (!(v >= 0.0) || !std::isfinite(v)) fail(fmt::format("{} must be nonnegative (got {})", name, v));
    };
    if (n_nodes < 2) fail(fmt::format("n_nodes must be at least 2 (got {})", n_nodes));
    positive(sim_time, "sim_time");
    if (tx_size == 0) fail("tx_size must be positive");
    nonnegative(tx_delay, "tx_delay");
    positive(block_size_mb, "block_size");
    positive(block_interval, "block_interval");
    nonnegative(block_delay, "block_delay");
    nonnegative(block_reward, "block_reward");
    nonnegative(link_delay_mean, "link_delay_mean");
    nonnegative(link_delay_sigma, "link_delay_sigma");
    nonnegative(tx_count_mean, "tx_count_mean");
    nonnegative(tx_count_sigma, "tx_count_sigma");
    nonnegative(fee_mean, "fee_mean");
    nonnegative(fee_sigma, "fee_sigma");
    positive(tx_epoch, "tx_epoch");
    if (n_classes < 1 || n_classes > 255) fail(fmt::format("n_classes must be in [1, 255] (got {})", n_classes));
    if (!(theta >= 0.0 && theta <= 1.0)) fail(fmt::format("theta must be in [0, 1] (got {})", theta));
    if (eta < 1) fail("eta must be at least 1");
    weights.validate();
    if (kmeans_k < 1) fail("kmeans_k must be at least 1");
    nonnegative(power_min, "power_min");
    if (!(power_max > 0.0) || power_max < power_min) fail("power range must satisfy 0 <= power_min <= power_max, power_max > 0");
    if (block_capacity() < 1) fail("block_size is smaller than one transaction");
    committee::CommitteeConfig{committee_size, seed, rotation_period, honest_fraction}.validate();
    committee::RoundTimers::starting_at(0.0, block_interval, windows);
    if (bitwidth < gc::kMinBitwidth || bitwidth > gc::kMaxBitwidth) {
        fail(fmt::format("bitwidth must be in [{}, {}] (got {})", gc::kMinBitwidth, gc::kMaxBitwidth, bitwidth));
    }
    if (ot != "dh" && ot != "dealer") fail(fmt::format("ot must be \"dh\" or \"dealer\" (got \"{}\")", ot));
}

// ---------------------------------------------------------------------------
// Workload
// ---------------------------------------------------------------------------

double Workload::delay(UserId from, UserId to) const {
    if (from == to) return 0.0;
    return link_delay[static_cast<std::size_t>(from - 1) * n_nodes + (to - 1)];
}

double Workload::arrival(const Transaction& tx, UserId node, double tx_delay) const {
    if (tx.source_user == node) return tx.submit_time;
    return tx.submit_time + delay(tx.source_user, node) + tx_delay;
}

Workload gen_workload(const SimConfig& config, std::uint64_t seed) {
    config.validate();
    std::mt19937_64 rng(seed);
    Workload w;
    w.n_nodes = config.n_nodes;
    const std::uint32_t n = config.n_nodes;

    std::uniform_real_distribution<double> power(config.power_min, config.power_max);
    w.power.resize(n);
    for (auto& p : w.power) p = power(rng);

    std::normal_distribution<double> link(config.link_delay_mean, config.link_delay_sigma);
    w.link_delay.assign(static_cast<std::size_t>(n) * n, 0.0f);
    for (std::uint32_t a = 0; a < n; ++a) {
        for (std::uint32_t b = 0; b < n; ++b) {
            if (a != b) w.link_delay[static_cast<std::size_t>(a) * n + b] = static_cast<float>(std::max(0.001, link(rng)));
        }
    }

    std::normal_distribution<double> count(config.tx_count_mean, config.tx_count_sigma);
    std::normal_distribution<double> fee(config.fee_mean, config.fee_sigma);
    std::uniform_real_distribution<double> offset(0.0, config.tx_epoch);
    std::uniform_int_distribution<int> cls(0, static_cast<int>(config.n_classes) - 1);
    const auto epochs = static_cast<std::uint64_t>(std::ceil(config.sim_time / config.tx_epoch));
    for (std::uint64_t e = 0; e < epochs; ++e) {
        const double start = static_cast<double>(e) * config.tx_epoch;
        for (UserId node = 1; node <= n; ++node) {
            const auto k = static_cast<std::int64_t>(std::max(0.0, std::round(count(rng))));
            for (std::int64_t i = 0; i < k; ++i) {
                Transaction tx;
                tx.source_user = node;
                tx.submit_time = start + offset(rng);
                tx.tx_class = static_cast<std::uint8_t>(cls(rng));
                tx.fee = std::max(0.0, fee(rng));
                tx.size_bytes = config.tx_size;
                if (tx.submit_time < config.sim_time) w.transactions.push_back(tx);
            }
        }
    }
    std::stable_sort(w.transactions.begin(), w.transactions.end(),
                     [](const Transaction& a, const Transaction& b) { return a.submit_time < b.submit_time; });
    for (std::size_t i = 0; i < w.transactions.size(); ++i) w.transactions[i].id = i + 1;
    return w;
}

// ---------------------------------------------------------------------------
// Events
// ---------------------------------------------------------------------------

const char* to_string(EventKind kind) {
    switch (kind) {
        case EventKind::kTxCreate: return "TxCreate";
        case EventKind::kTxArrive: return "TxArrive";
        case EventKind::kMiningDeadline: return "MiningDeadline";
        case EventKind::kVoteExchange: return "VoteExchange";
        case EventKind::kVoteSubmit: return "VoteSubmit";
        case EventKind::kCountDeadline: return "CountDeadline";
        case EventKind::kBlockProposed: return "BlockProposed";
        case EventKind::kBlockArrive: return "BlockArrive";
        case EventKind::kRoundAbort: return "RoundAbort";
    }
    return "?";
}

namespace {

bool later(const Event& a, const Event& b) {
    if (a.time != b.time) return a.time > b.time;
    return a.sequence > b.sequence;
}

}  // namespace

void EventQueue::push(double time, EventKind kind, std::uint64_t round, std::uint32_t node) {
    heap_.push_back(Event{time, next_sequence_++, kind, round, node});
    std::push_heap(heap_.begin(), heap_.end(), later);
}

Event EventQueue::pop() {
    std::pop_heap(heap_.begin(), heap_.end(), later);
    Event e = heap_.back();
    heap_.pop_back();
    return e;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

bool Metrics::same_outcome(const Metrics& o) const {
    auto rounds_equal = [](const RoundRecord& a, const RoundRecord& b) {
        return a.round == b.round && a.leader == b.leader && a.aborted == b.aborted && a.quorum == b.quorum &&
               a.block_txs == b.block_txs && a.commit_time == b.commit_time &&
               a.selected_centroid_distance == b.selected_centroid_distance &&
               a.mempool_centroid_distance == b.mempool_centroid_distance;
    };
    auto pca_equal = [](const PcaRow& a, const PcaRow& b) {
        return a.tx_id == b.tx_id && a.x == b.x && a.y == b.y && a.cluster == b.cluster && a.selected == b.selected;
    };
    return protocol == o.protocol && generated == o.generated && confirmed_tx_count == o.confirmed_tx_count &&
           pending_at_end == o.pending_at_end && sim_time == o.sim_time && tps == o.tps &&
           mean_latency == o.mean_latency && p50_latency == o.p50_latency && p90_latency == o.p90_latency &&
           p99_latency == o.p99_latency && blocks == o.blocks && rounds == o.rounds && aborts == o.aborts &&
           fee_total == o.fee_total &&
           std::equal(round_log.begin(), round_log.end(), o.round_log.begin(), o.round_log.end(), rounds_equal) &&
           crypto_compares == o.crypto_compares && crypto_bytes == o.crypto_bytes &&
           crypto_mismatches == o.crypto_mismatches && vote_matrix_bytes == o.vote_matrix_bytes &&
           functionality_rounds == o.functionality_rounds && functionality_ok == o.functionality_ok &&
           latencies == o.latencies &&
           std::equal(pca.begin(), pca.end(), o.pca.begin(), o.pca.end(), pca_equal) && trace == o.trace;
}

std::vector<double> confirmation_latency(const Metrics& metrics) { return metrics.latencies; }

namespace {

double percentile(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) return 0.0;
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

// State shared by both protocols: the pending pool, the committed history and the
// latency ledger.
class Ledger {
public:
    Ledger(const SimConfig& config, const Workload& workload, Metrics& metrics)
        : config_(config), w_(workload), metrics_(metrics), committed_(workload.transactions.size(), false) {
        metrics_.generated = workload.transactions.size();
        metrics_.sim_time = config.sim_time;
        pending_counts_.assign(static_cast<std::size_t>(config.n_nodes) * config.n_classes, 0);
        history_counts_.assign(pending_counts_.size(), 0);
        max_delay_ = config.tx_delay;
        for (float d : workload.link_delay) max_delay_ = std::max(max_delay_, static_cast<double>(d) + config.tx_delay);
    }

    void trace(const std::string& line) {
        if (config_.record_trace) metrics_.trace.push_back(line);
    }

    void trace_event(const Event& e) {
        if (config_.record_trace) {
            metrics_.trace.push_back(fmt::format("event,{},{},{},{}", e.time, to_string(e.kind), e.round, e.node));
        }
    }

    /// Brings every transaction submitted at or before `now` into the pending pool.
    void advance(double now) {
        const auto& txs = w_.transactions;
        while (created_ < txs.size() && txs[created_].submit_time <= now) {
            const Transaction& tx = txs[created_];
            pending_.push_back(static_cast<std::uint32_t>(created_));
            ++pending_counts_[slot(tx)];
            if (config_.record_trace) trace(fmt::format("tx,{},{}", tx.id, tx.submit_time));
            ++created_;
        }
    }

    /// The mempool of `node` at `now`: pending transactions that already reached it.
    std::vector<Transaction> snapshot(UserId node, double now) const {
        std::vector<Transaction> out;
        out.reserve(pending_.size());
        for (auto idx : pending_) {
            const Transaction& tx = w_.transactions[idx];
            if (w_.arrival(tx, node, config_.tx_delay) <= now) out.push_back(tx);
        }
        return out;
    }

    /// Per-user class counts over history and the mempool of `node` at `now`.
    void user_vectors(UserId node, double now, std::vector<UserVector>& out) const {
        const std::uint32_t n = config_.n_nodes;
        const std::uint32_t c = config_.n_classes;
        out.resize(n);
        for (std::uint32_t u = 0; u < n; ++u) {
            out[u].user = u + 1;
            out[u].counts.resize(c);
            for (std::uint32_t k = 0; k < c; ++k) {
                const std::size_t s = static_cast<std::size_t>(u) * c + k;
                out[u].counts[k] = history_counts_[s] + pending_counts_[s];
            }
        }
        // only the most recent transactions can still be in flight
        for (auto it = pending_.rbegin(); it != pending_.rend(); ++it) {
            const Transaction& tx = w_.transactions[*it];
            if (tx.submit_time < now - max_delay_) break;
            if (w_.arrival(tx, node, config_.tx_delay) > now) --out[tx.source_user - 1].counts[tx.tx_class];
        }
    }

    std::span<const Transaction> history() const { return history_flat_; }

    void commit(const std::vector<Transaction>& body, double when) {
        for (const auto& tx : body) {
            const std::size_t idx = tx.id - 1;
            if (idx >= committed_.size() || committed_[idx]) {
                throw std::logic_error(fmt::format("transaction {} committed twice", tx.id));
            }
            committed_[idx] = true;
            --pending_counts_[slot(tx)];
            ++history_counts_[slot(tx)];
            const double latency = when - tx.submit_time;
            latencies_.push_back(latency);
            metrics_.fee_total += tx.fee;
            if (config_.record_trace) trace(fmt::format("commit,{},{}", tx.id, when));
        }
        std::erase_if(pending_, [&](std::uint32_t idx) { return committed_[idx]; });
        ++metrics_.blocks;
        metrics_.confirmed_tx_count += body.size();

        history_.push_back(body);
        if (history_.size() > config_.eta) {
            for (const auto& tx : history_.front()) --history_counts_[slot(tx)];
            history_.pop_front();
        }
        history_flat_.clear();
        for (const auto& b : history_) history_flat_.insert(history_flat_.end(), b.begin(), b.end());
    }

    void finish() {
        metrics_.pending_at_end = metrics_.generated - metrics_.confirmed_tx_count;
        metrics_.tps = static_cast<double>(metrics_.confirmed_tx_count) / config_.sim_time;
        std::vector<double> sorted = latencies_;
        std::sort(sorted.begin(), sorted.end());
        if (!sorted.empty()) {
            // summed in commit order, the order a trace replay uses
            metrics_.mean_latency = std::accumulate(latencies_.begin(), latencies_.end(), 0.0) /
                                    static_cast<double>(latencies_.size());
        }
        metrics_.p50_latency = percentile(sorted, 0.50);
        metrics_.p90_latency = percentile(sorted, 0.90);
        metrics_.p99_latency = percentile(sorted, 0.99);
        if (config_.record_latencies) metrics_.latencies = std::move(latencies_);
        trace(fmt::format("end,{}", config_.sim_time));
    }

    bool has_pending() const { return !pending_.empty(); }

private:
    std::size_t slot(const Transaction& tx) const {
        return static_cast<std::size_t>(tx.source_user - 1) * config_.n_classes + tx.tx_class;
    }

    const SimConfig& config_;
    const Workload& w_;
    Metrics& metrics_;
    std::vector<bool> committed_;
    std::vector<std::uint32_t> pending_;  // indices into the workload, ascending
    std::size_t created_ = 0;
    std::vector<std::uint32_t> pending_counts_;
    std::vector<std::uint32_t> history_counts_;
    std::deque<std::vector<Transaction>> history_;
    std::vector<Transaction> history_flat_;
    std::vector<double> latencies_;
    double max_delay_ = 0.0;
};

void check_workload(const SimConfig& config, const Workload& workload) {
    if (workload.n_nodes != config.n_nodes || workload.power.size() != config.n_nodes ||
        workload.link_delay.size() != static_cast<std::size_t>(config.n_nodes) * config.n_nodes) {
        throw ConfigError("workload does not match the configured node count");
    }
}

std::uint64_t workload_seed_of(const SimConfig& config) {
    return config.workload_seed != 0 ? config.workload_seed : crypto::derive_seed(config.seed, "workload");
}

// ---------------------------------------------------------------------------
// PoUS
// ---------------------------------------------------------------------------

class PousRun {
public:
    PousRun(const SimConfig& config, const Workload& workload)
        : cfg_(config), w_(workload), ledger_(config, workload, metrics_),
          capacity_(config.block_capacity()), m_(config.n_nodes) {
        metrics_.protocol = "pous";
        if (cfg_.committee_size > m_) {
            throw ConfigError(fmt::format("committee_size {} exceeds n_nodes {}", cfg_.committee_size, m_));
        }
        if (cfg_.ot == "dh") {
            ot_ = std::make_unique<gc::DhObliviousTransfer>(crypto::derive_seed(config.seed, "ot"));
        } else {
            ot_ = std::make_unique<gc::DealerObliviousTransfer>();
        }
        miners_.resize(m_);
        std::iota(miners_.begin(), miners_.end(), MinerId{1});
        budgets_.resize(m_);
        for (std::uint32_t i = 0; i < m_; ++i) {
            budgets_[i] = static_cast<std::uint64_t>(
                std::llround(static_cast<double>(cfg_.budget_max_pairs) * w_.power[i] / cfg_.power_max));
        }
        committee_cfg_ = committee::CommitteeConfig{cfg_.committee_size, crypto::derive_seed(config.seed, "committee"),
                                                    cfg_.rotation_period, cfg_.honest_fraction};
        const auto total_rounds = static_cast<std::uint64_t>(std::floor(cfg_.sim_time / cfg_.block_interval));
        pca_round_ = cfg_.pca_round != 0 ? cfg_.pca_round : std::max<std::uint64_t>(1, (total_rounds + 1) / 2);
    }

    Metrics run() {
        queue_.push(timers(1).mining_deadline, EventKind::kMiningDeadline, 1);
        while (!queue_.empty() && queue_.top().time <= cfg_.sim_time) {
            const Event e = queue_.pop();
            ledger_.advance(e.time);
            ledger_.trace_event(e);
            switch (e.kind) {
                case EventKind::kMiningDeadline: on_mining(e); break;
                case EventKind::kVoteExchange: on_vote_exchange(e); break;
                case EventKind::kVoteSubmit: on_vote_submit(e); break;
                case EventKind::kCountDeadline: on_count(e); break;
                case EventKind::kBlockProposed: on_proposed(e); break;
                case EventKind::kBlockArrive: on_arrive(e); break;
                case EventKind::kRoundAbort: on_abort(e); break;
                default: break;
            }
        }
        ledger_.advance(cfg_.sim_time);
        ledger_.finish();
        return std::move(metrics_);
    }

private:
    committee::RoundTimers timers(std::uint64_t round) const {
        return committee::RoundTimers::starting_at(static_cast<double>(round - 1) * cfg_.block_interval,
                                                   cfg_.block_interval, cfg_.windows);
    }

    void on_mining(const Event& e) {
        const std::uint64_t round = e.round;
        // next round keeps the fixed cadence
        queue_.push(timers(round + 1).mining_deadline, EventKind::kMiningDeadline, round + 1);
        if (!reuse_mining_ || usms_.empty()) {
            usms_.clear();
            usms_.reserve(m_);
            std::vector<UserVector> vectors;
            for (MinerId i = 1; i <= m_; ++i) {
                ledger_.user_vectors(i, e.time, vectors);
                usms_.push_back(compute_usm(vectors, budgets_[i - 1], i));
            }
        }
        reuse_mining_ = false;
        queue_.push(e.time, EventKind::kVoteExchange, round);
    }

    std::vector<MinerId> voters_of(MinerId candidate, crypto::HashDrbg& rng) const {
        std::vector<MinerId> voters;
        voters.reserve(m_ - 1);
        for (MinerId v = 1; v <= m_; ++v) {
            if (v != candidate) voters.push_back(v);
        }
        if (cfg_.voter_panel == 0 || cfg_.voter_panel >= voters.size()) return voters;
        for (std::size_t i = 0; i < cfg_.voter_panel; ++i) {
            std::swap(voters[i], voters[i + rng.uniform(voters.size() - i)]);
        }
        voters.resize(cfg_.voter_panel);
        std::sort(voters.begin(), voters.end());
        return voters;
    }

    void on_vote_exchange(const Event& e) {
        const std::uint64_t round = e.round;
        crypto::HashDrbg panel_rng(crypto::derive_seed(cfg_.seed, "panel", round));
        const std::uint32_t panel = (cfg_.voter_panel == 0 || cfg_.voter_panel >= m_ - 1) ? m_ - 1 : cfg_.voter_panel;
        bts::TallyBuilder builder(m_, cfg_.n_nodes, static_cast<double>(panel));
        bts::CastOptions options;
        options.include_abstentions = false;

        std::vector<bts::VoteRecord> records;
        std::vector<FlatIndex> approved;
        for (MinerId i = 1; i <= m_; ++i) {
            records.clear();
            const auto voters = voters_of(i, panel_rng);
            bts::PlainChannel channel(usms_[i - 1], cfg_.theta, cfg_.bitwidth);
            for (MinerId r : voters) {
                auto cast = bts::cast_votes(usms_[r - 1], channel, options);
                approved.clear();
                for (const auto& rec : cast) {
                    if (rec.x == 1) approved.push_back(rec.entry);
                }
                if (!approved.empty()) {
                    metrics_.vote_matrix_bytes += binary_compressed_rows(cfg_.n_nodes, approved).byte_size();
                }
                records.insert(records.end(), cast.begin(), cast.end());
            }
            builder.add_candidate(i, records);
        }
        pending_tally_ = std::move(builder).finish();
        sample_secure_compares(round);
        queue_.push(timers(round).voting_deadline, EventKind::kVoteSubmit, round);
    }

    // A few entries per round go through the full garbled-circuit protocol; the rest
    // use the comparator's plaintext predicate. Disagreements are counted.
    void sample_secure_compares(std::uint64_t round) {
        crypto::HashDrbg rng(crypto::derive_seed(cfg_.seed, "crypto-sample", round));
        std::uint32_t done = 0;
        for (std::uint32_t attempt = 0; done < cfg_.crypto_samples_per_round && attempt < 64; ++attempt) {
            const MinerId voter = static_cast<MinerId>(rng.uniform(m_) + 1);
            MinerId candidate = static_cast<MinerId>(rng.uniform(m_ - 1) + 1);
            if (candidate >= voter) ++candidate;
            const auto entries = usms_[voter - 1].entries();
            if (entries.empty()) continue;
            const auto& entry = entries[rng.uniform(entries.size())];
            const auto theirs = usms_[candidate - 1].at_flat(entry.index);
            if (!theirs) continue;
            const bool plain = gc::within_threshold(gc::FixedPoint::encode(*theirs, cfg_.bitwidth),
                                                    gc::FixedPoint::encode(entry.value, cfg_.bitwidth),
                                                    gc::FixedPoint::encode(cfg_.theta, cfg_.bitwidth));
            const auto start = std::chrono::steady_clock::now();
            const auto result = gc::secure_compare(*theirs, entry.value, cfg_.theta, cfg_.bitwidth,
                                                   crypto::derive_seed(cfg_.seed, "garble", round * 64 + attempt), *ot_);
            metrics_.crypto_wall_seconds +=
                std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            ++metrics_.crypto_compares;
            metrics_.crypto_bytes += result.cost.circuit_bytes + result.cost.ot_bytes;
            if (result.within != plain) ++metrics_.crypto_mismatches;
            ++done;
        }
    }

    void on_vote_submit(const Event& e) {
        // every voter submits once its voting timer expires; Alg. 3 gates the batch
        const auto t = timers(e.round);
        const auto committee = committee::select_committee(miners_, committee_cfg_, e.round);
        accepted_ = true;
        for (MinerId r = 1; r <= m_; ++r) {
            const double at = e.time + w_.delay(r, committee.front());
            if (committee::accept_vote_submission({}, at, t) != committee::Submission::kAccepted) accepted_ = false;
        }
        queue_.push(t.result_waiting_deadline, EventKind::kCountDeadline, e.round);
    }

    void on_count(const Event& e) {
        ++metrics_.rounds;
        const std::uint64_t round = e.round;
        RoundRecord rec;
        rec.round = round;
        committee_ = committee::select_committee(miners_, committee_cfg_, round);

        std::optional<committee::Decision> decision;
        if (accepted_ && pending_tally_) decision = committee_agree(round);
        if (!decision) {
            rec.aborted = true;
            metrics_.round_log.push_back(rec);
            queue_.push(e.time, EventKind::kRoundAbort, round);
            return;
        }
        rec.leader = decision->leader;
        rec.quorum = decision->quorum_count;
        metrics_.round_log.push_back(rec);
        decision_ = std::move(decision);
        double notify = 0.0;
        for (MinerId c : committee_) notify = std::max(notify, w_.delay(c, decision_->leader));
        queue_.push(e.time + notify, EventKind::kBlockProposed, round, decision_->leader);
    }

    std::optional<committee::Decision> committee_agree(std::uint64_t round) {
        const std::uint32_t size = static_cast<std::uint32_t>(committee_.size());
        const auto honest_count = static_cast<std::uint32_t>(std::llround(cfg_.honest_fraction * size));
        const committee::MemberTally honest = committee::summarize(*pending_tally_);
        if (honest_count == size) {
            return committee::Decision{round, honest.leader, honest.digest, pending_tally_->global_best, size};
        }
        // Byzantine members send each honest member an independent forged value
        crypto::HashDrbg rng(crypto::derive_seed(cfg_.seed, "byzantine", round));
        std::optional<committee::MemberTally> agreed;
        std::uint32_t min_quorum = size;
        for (std::uint32_t h = 0; h < honest_count; ++h) {
            std::vector<committee::MemberTally> view(honest_count, honest);
            for (std::uint32_t b = honest_count; b < size; ++b) {
                committee::MemberTally forged;
                forged.leader = static_cast<MinerId>(rng.uniform(m_) + 1);
                rng.fill(forged.digest);
                view.push_back(forged);
            }
            std::uint32_t count = 0;
            if (auto v = committee::agree_on(view, size, &count)) {
                agreed = v;
                min_quorum = std::min(min_quorum, count);
            }
        }
        if (!agreed || !(*agreed == honest)) return std::nullopt;
        return committee::Decision{round, honest.leader, honest.digest, pending_tally_->global_best, min_quorum};
    }

    void on_proposed(const Event& e) {
        const MinerId leader = e.node;
        const auto snapshot = ledger_.snapshot(leader, e.time);
        std::vector<UserVector> vectors = build_user_vectors(DataView{ledger_.history(), snapshot}, cfg_.n_nodes,
                                                             ClassSet::with_count(cfg_.n_classes));
        packing::PackingContext ctx{snapshot, vectors, cfg_.weights, cfg_.kmeans_k,
                                    committee::packing_seed(*decision_), capacity_, e.time};
        const auto packed = packing::pack_from_context(ctx, prev_hash_, e.round, leader);
        if (!packed.block) {
            mark_abort();
            queue_.push(e.time, EventKind::kRoundAbort, e.round);
            return;
        }
        double verify_delay = 0.0;
        for (MinerId c : committee_) verify_delay = std::max(verify_delay, w_.delay(leader, c));
        const auto verdict = committee::verify_block(*packed.block, *decision_, ctx);
        if (verdict.verdict != committee::Verdict::kAccept) {
            ledger_.trace(fmt::format("discard,{},{}", e.round, verdict.reason));
            mark_abort();
            queue_.push(e.time + verify_delay, EventKind::kRoundAbort, e.round);
            return;
        }
        record_functionality(packed, snapshot, vectors);
        if (cfg_.record_pca && e.round == pca_round_) record_pca(packed, snapshot, vectors);
        proposed_ = *packed.block;
        queue_.push(e.time + verify_delay + cfg_.block_delay, EventKind::kBlockArrive, e.round, leader);
    }

    void mark_abort() {
        if (!metrics_.round_log.empty()) {
            metrics_.round_log.back().aborted = true;
            metrics_.round_log.back().leader = 0;
        }
    }

    void record_functionality(const packing::PackResult& packed, const std::vector<Transaction>& snapshot,
                              const std::vector<UserVector>& vectors) {
        const auto& clustering = packed.clustering;
        auto distance = [&](const Transaction& tx) {
            return packing::centroid_distance(vectors[tx.source_user - 1],
                                              clustering.clusters[clustering.user_cluster[tx.source_user - 1]]);
        };
        double selected = 0.0;
        for (const auto& tx : packed.block->body) selected += distance(tx);
        selected /= static_cast<double>(packed.block->body.size());
        double pool = 0.0;
        for (const auto& tx : snapshot) pool += distance(tx);
        pool /= static_cast<double>(snapshot.size());
        auto& rec = metrics_.round_log.back();
        rec.selected_centroid_distance = selected;
        rec.mempool_centroid_distance = pool;
        ++metrics_.functionality_rounds;
        // identical sets summed in different orders may differ in the last bits
        if (selected <= pool + 1e-9 * std::max(1.0, pool)) ++metrics_.functionality_ok;
    }

    void record_pca(const packing::PackResult& packed, const std::vector<Transaction>& snapshot,
                    const std::vector<UserVector>& vectors) {
        if (snapshot.size() < 2) return;
        std::vector<std::vector<double>> points;
        points.reserve(snapshot.size());
        for (const auto& tx : snapshot) {
            const auto& c = vectors[tx.source_user - 1].counts;
            points.emplace_back(c.begin(), c.end());
        }
        const auto pca = packing::pca_project(points);
        std::vector<std::uint64_t> chosen;
        for (const auto& tx : packed.block->body) chosen.push_back(tx.id);
        std::sort(chosen.begin(), chosen.end());
        for (std::size_t i = 0; i < snapshot.size(); ++i) {
            const auto& tx = snapshot[i];
            metrics_.pca.push_back(PcaRow{tx.id, pca.coords[i][0], pca.coords[i][1],
                                          packed.clustering.user_cluster[tx.source_user - 1],
                                          std::binary_search(chosen.begin(), chosen.end(), tx.id)});
        }
    }

    void on_arrive(const Event& e) {
        ledger_.commit(proposed_.body, e.time);
        ledger_.trace(fmt::format("block,{},{},{},{}", e.time, e.round, e.node, proposed_.body.size()));
        prev_hash_ = proposed_.header.hash();
        auto& rec = metrics_.round_log.back();
        rec.block_txs = static_cast<std::uint32_t>(proposed_.body.size());
        rec.commit_time = e.time;
    }

    void on_abort(const Event&) {
        ++metrics_.aborts;
        reuse_mining_ = true;
    }

    const SimConfig& cfg_;
    const Workload& w_;
    Metrics metrics_;
    Ledger ledger_;
    EventQueue queue_;
    std::uint32_t capacity_;
    std::uint32_t m_;
    std::unique_ptr<gc::ObliviousTransfer> ot_;
    std::vector<MinerId> miners_;
    std::vector<std::uint64_t> budgets_;
    committee::CommitteeConfig committee_cfg_;
    std::uint64_t pca_round_ = 1;

    std::vector<SimilarityMatrix> usms_;
    bool reuse_mining_ = false;
    std::optional<bts::TallyResult> pending_tally_;
    bool accepted_ = false;
    std::vector<MinerId> committee_;
    std::optional<committee::Decision> decision_;
    packing::Block proposed_;
    crypto::Digest prev_hash_{};
};

// ---------------------------------------------------------------------------
// PoW
// ---------------------------------------------------------------------------

class PowRun {
public:
    PowRun(const SimConfig& config, const Workload& workload)
        : cfg_(config), w_(workload), ledger_(config, workload, metrics_), capacity_(config.block_capacity()),
          rng_(crypto::derive_seed(config.seed, "pow")) {
        metrics_.protocol = "pow";
        const double total = std::accumulate(w_.power.begin(), w_.power.end(), 0.0);
        if (total > 0.0) {
            leader_dist_ = std::discrete_distribution<std::uint32_t>(w_.power.begin(), w_.power.end());
        } else {
            std::vector<double> flat(w_.power.size(), 1.0);
            leader_dist_ = std::discrete_distribution<std::uint32_t>(flat.begin(), flat.end());
        }
    }

    Metrics run() {
        start_round(0.0, 1);
        while (!queue_.empty() && queue_.top().time <= cfg_.sim_time) {
            const Event e = queue_.pop();
            ledger_.advance(e.time);
            ledger_.trace_event(e);
            if (e.kind == EventKind::kBlockProposed) {
                on_found(e);
            } else if (e.kind == EventKind::kBlockArrive) {
                on_arrive(e);
            }
        }
        ledger_.advance(cfg_.sim_time);
        ledger_.finish();
        return std::move(metrics_);
    }

private:
    void start_round(double now, std::uint64_t round) {
        const MinerId leader = leader_dist_(rng_) + 1;
        std::exponential_distribution<double> wait(1.0 / cfg_.block_interval);
        queue_.push(now + wait(rng_), EventKind::kBlockProposed, round, leader);
    }

    void on_found(const Event& e) {
        ++metrics_.rounds;
        auto snapshot = ledger_.snapshot(e.node, e.time);
        const std::size_t take = std::min<std::size_t>(capacity_, snapshot.size());
        auto by_fee = [](const Transaction& a, const Transaction& b) {
            if (a.fee != b.fee) return a.fee > b.fee;
            if (a.submit_time != b.submit_time) return a.submit_time < b.submit_time;
            return a.id < b.id;
        };
        std::partial_sort(snapshot.begin(), snapshot.begin() + static_cast<std::ptrdiff_t>(take), snapshot.end(),
                          by_fee);
        snapshot.resize(take);
        body_ = std::move(snapshot);
        RoundRecord rec;
        rec.round = e.round;
        rec.leader = e.node;
        rec.quorum = 0;
        metrics_.round_log.push_back(rec);
        queue_.push(e.time + cfg_.block_delay, EventKind::kBlockArrive, e.round, e.node);
    }

    void on_arrive(const Event& e) {
        auto& rec = metrics_.round_log.back();
        rec.commit_time = e.time;
        rec.block_txs = static_cast<std::uint32_t>(body_.size());
        if (!body_.empty()) {
            ledger_.commit(body_, e.time);
            ledger_.trace(fmt::format("block,{},{},{},{}", e.time, e.round, e.node, body_.size()));
        }
        start_round(e.time, e.round + 1);
    }

    const SimConfig& cfg_;
    const Workload& w_;
    Metrics metrics_;
    Ledger ledger_;
    EventQueue queue_;
    std::uint32_t capacity_;
    std::mt19937_64 rng_;
    std::discrete_distribution<std::uint32_t> leader_dist_;
    std::vector<Transaction> body_;
};

}  // namespace

Metrics run_pous(const SimConfig& config, const Workload& workload) {
    config.validate();
    check_workload(config, workload);
    return PousRun(config, workload).run();
}

Metrics run_pous(const SimConfig& config) {
    config.validate();
    const Workload w = gen_workload(config, workload_seed_of(config));
    return run_pous(config, w);
}

Metrics run_pow(const SimConfig& config, const Workload& workload) {
    config.validate();
    check_workload(config, workload);
    return PowRun(config, workload).run();
}

Metrics run_pow(const SimConfig& config) {
    config.validate();
    const Workload w = gen_workload(config, workload_seed_of(config));
    return run_pow(config, w);
}

// ---------------------------------------------------------------------------
// Replay
// ---------------------------------------------------------------------------

ReplaySummary replay_trace(std::istream& in) {
    ReplaySummary s;
    std::unordered_map<std::uint64_t, double> submitted;
    double latency_sum = 0.0;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) f.push_back(field);
        try {
            if (f[0] == "tx" && f.size() == 3) {
                submitted[std::stoull(f[1])] = std::stod(f[2]);
                ++s.created;
            } else if (f[0] == "commit" && f.size() == 3) {
                auto it = submitted.find(std::stoull(f[1]));
                if (it == submitted.end()) throw RejectedInput("commit of an unknown transaction");
                latency_sum += std::stod(f[2]) - it->second;
                ++s.confirmed;
            } else if (f[0] == "block") {
                ++s.blocks;
            } else if (f[0] == "end" && f.size() == 2) {
                s.sim_time = std::stod(f[1]);
            } else if (f[0] != "event" && f[0] != "discard") {
                throw RejectedInput("unknown record");
            }
        } catch (const std::logic_error& err) {
            throw RejectedInput(fmt::format("trace line {}: {} ({})", line_no, err.what(), line));
        }
    }
    if (s.sim_time > 0.0) s.tps = static_cast<double>(s.confirmed) / s.sim_time;
    if (s.confirmed > 0) s.mean_latency = latency_sum / static_cast<double>(s.confirmed);
    return s;
}

}  // namespace pous::sim
