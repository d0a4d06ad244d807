#include "pous/committee.hpp"

#include <algorithm>
#include <map>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "pous/errors.hpp"

namespace pous::committee {

void CommitteeConfig::validate() const {
    if (size < 4) throw ConfigError(fmt::format("committee size {} is below the minimum of 4", size));
    if (rotation_period < 1) throw ConfigError("committee rotation period must be at least 1");
    if (!(honest_fraction >= 0.0 && honest_fraction <= 1.0)) {
        throw ConfigError(fmt::format("honest fraction {} outside [0, 1]", honest_fraction));
    }
}

std::vector<MinerId> select_committee(std::span<const MinerId> miners, const CommitteeConfig& config,
                                      std::uint64_t round) {
    config.validate();
    if (config.size > miners.size()) {
        throw ConfigError(fmt::format("committee size {} exceeds the {} miners", config.size, miners.size()));
    }
    std::vector<MinerId> pool(miners.begin(), miners.end());
    std::sort(pool.begin(), pool.end());
    const std::uint64_t epoch = round / config.rotation_period;
    crypto::HashDrbg rng(crypto::derive_seed(config.selection_seed, "committee", epoch), "pous.committee");
    for (std::size_t i = 0; i < config.size; ++i) {
        const std::size_t j = i + rng.uniform(pool.size() - i);
        std::swap(pool[i], pool[j]);
    }
    pool.resize(config.size);
    std::sort(pool.begin(), pool.end());
    return pool;
}

RoundTimers RoundTimers::starting_at(double start, double interval, const WindowSplit& split) {
    if (!(interval > 0.0)) throw ConfigError("round interval must be positive");
    if (!(split.mining > 0.0 && split.voting > 0.0 && split.mining + split.voting < 1.0)) {
        throw ConfigError(fmt::format("invalid window split mining={} voting={}", split.mining, split.voting));
    }
    RoundTimers t;
    t.mining_deadline = start + interval * split.mining;
    t.voting_deadline = t.mining_deadline + interval * split.voting;
    t.result_waiting_deadline = start + interval;
    t.validate();
    return t;
}

void RoundTimers::validate() const {
    if (!(mining_deadline < voting_deadline && voting_deadline < result_waiting_deadline)) {
        throw ConfigError("round timers must satisfy mining < voting < result-waiting deadlines");
    }
}

Submission accept_vote_submission(std::span<const bts::VoteRecord> batch, double now, const RoundTimers& timers) {
    if (timers.voting_deadline <= now && now < timers.result_waiting_deadline) return Submission::kAccepted;
    spdlog::debug("dropped a batch of {} vote records submitted at {:.3f} outside [{:.3f}, {:.3f})", batch.size(), now,
                  timers.voting_deadline, timers.result_waiting_deadline);
    return Submission::kRejected;
}

MemberTally summarize(const bts::TallyResult& tally) { return MemberTally{tally.leader, tally.digest()}; }

std::uint32_t quorum_threshold(std::uint32_t committee_size) { return 2 * committee_size / 3 + 1; }

std::optional<MemberTally> agree_on(std::span<const MemberTally> received, std::uint32_t committee_size,
                                    std::uint32_t* quorum_count) {
    if (received.size() > committee_size) {
        throw RejectedInput(fmt::format("{} tallies for a committee of {}", received.size(), committee_size));
    }
    std::map<std::pair<MinerId, crypto::Digest>, std::uint32_t> counts;
    for (const auto& t : received) ++counts[{t.leader, t.digest}];
    const std::uint32_t quorum = quorum_threshold(committee_size);
    for (const auto& [value, count] : counts) {
        if (count >= quorum) {
            if (quorum_count != nullptr) *quorum_count = count;
            return MemberTally{value.first, value.second};
        }
    }
    if (quorum_count != nullptr) *quorum_count = 0;
    return std::nullopt;
}

std::optional<Decision> agree(std::span<const bts::TallyResult> member_tallies, std::uint32_t committee_size,
                              std::uint64_t round) {
    std::vector<MemberTally> summaries;
    summaries.reserve(member_tallies.size());
    for (const auto& t : member_tallies) summaries.push_back(summarize(t));
    std::uint32_t count = 0;
    const auto value = agree_on(summaries, committee_size, &count);
    if (!value) return std::nullopt;
    for (std::size_t i = 0; i < summaries.size(); ++i) {
        if (summaries[i] == *value) {
            return Decision{round, value->leader, value->digest, member_tallies[i].global_best, count};
        }
    }
    return std::nullopt;
}

std::string decision_log_line(std::uint64_t round, const std::optional<Decision>& decision) {
    if (!decision) return fmt::format("{},0,0,1", round);
    return fmt::format("{},{},{},0", round, decision->leader, decision->quorum_count);
}

std::uint64_t packing_seed(const Decision& decision) {
    std::uint64_t head = 0;
    for (int i = 0; i < 8; ++i) head |= static_cast<std::uint64_t>(decision.global_best_digest[i]) << (8 * i);
    return crypto::derive_seed(head, "packing", decision.round);
}

Verification verify_block(const packing::Block& block, const Decision& decision,
                          const packing::PackingContext& context) {
    auto discard = [](std::string reason) { return Verification{Verdict::kDiscard, std::move(reason)}; };
    if (block.header.producer != decision.leader) {
        return discard(fmt::format("producer {} is not the elected leader {}", block.header.producer, decision.leader));
    }
    if (block.header.round != decision.round) return discard("block round differs from the decision");
    if (block.body.empty()) return discard("empty block body");
    if (block.header.flag.size() != context.capacity) return discard("flag length differs from the block capacity");
    try {
        const auto sizes = packing::cluster_sizes(block.header.flag, static_cast<std::uint32_t>(block.body.size()));
        (void)sizes;
    } catch (const MalformedFlag& e) {
        return discard(fmt::format("malformed flag: {}", e.what()));
    }
    if (packing::merkle_root(block.body) != block.header.merkle_root) return discard("Merkle root mismatch");
    if (context.seed != packing_seed(decision)) return discard("clustering seed does not follow the decision");

    std::vector<const Transaction*> snapshot;
    snapshot.reserve(context.snapshot.size());
    for (const auto& tx : context.snapshot) snapshot.push_back(&tx);
    const auto by_id = [](const Transaction* a, const Transaction* b) { return a->id < b->id; };
    if (!std::is_sorted(snapshot.begin(), snapshot.end(), by_id)) std::sort(snapshot.begin(), snapshot.end(), by_id);
    for (const auto& tx : block.body) {
        auto it = std::lower_bound(snapshot.begin(), snapshot.end(), &tx, by_id);
        if (it == snapshot.end() || (*it)->id != tx.id) {
            return discard(fmt::format("transaction {} is not in the declared mempool", tx.id));
        }
        const Transaction& s = **it;
        if (s.source_user != tx.source_user || s.tx_class != tx.tx_class || s.fee != tx.fee ||
            s.submit_time != tx.submit_time || s.size_bytes != tx.size_bytes) {
            return discard(fmt::format("transaction {} differs from the declared mempool copy", tx.id));
        }
    }

    packing::PackResult rebuilt;
    try {
        rebuilt = packing::pack_from_context(context, block.header.prev_hash, block.header.round, block.header.producer);
    } catch (const RejectedInput& e) {
        return discard(fmt::format("declared context cannot be packed: {}", e.what()));
    }
    if (!rebuilt.block) return discard("declared mempool yields no block");
    const auto& expect = *rebuilt.block;
    if (expect.header.flag != block.header.flag) return discard("flag does not match the packing rule");
    if (expect.body.size() != block.body.size()) return discard("body size does not match the packing rule");
    for (std::size_t i = 0; i < expect.body.size(); ++i) {
        if (expect.body[i].id != block.body[i].id) {
            return discard(fmt::format("position {} breaks the priority order", i + 1));
        }
    }
    return Verification{Verdict::kAccept, {}};
}

}  // namespace pous::committee
