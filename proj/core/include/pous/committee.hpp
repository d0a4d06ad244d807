#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pous/bts.hpp"
#include "pous/crypto.hpp"
#include "pous/packing.hpp"

namespace pous::committee {

struct CommitteeConfig {
    std::uint32_t size = 7;
    std::uint64_t selection_seed = 1;
    std::uint32_t rotation_period = 5;  // rounds between reselection
    double honest_fraction = 1.0;       // simulation knob

    void validate() const;
};

/// Seeded uniform sample without replacement, stable within a rotation period.
/// Result is sorted ascending. Throws ConfigError when size exceeds the miner count.
std::vector<MinerId> select_committee(std::span<const MinerId> miners, const CommitteeConfig& config,
                                      std::uint64_t round);

struct WindowSplit {
    double mining = 0.60;
    double voting = 0.25;  // result waiting takes the remainder
};

struct RoundTimers {
    double mining_deadline = 0.0;
    double voting_deadline = 0.0;
    double result_waiting_deadline = 0.0;

    static RoundTimers starting_at(double start, double interval, const WindowSplit& split = {});
    void validate() const;
};

enum class Submission { kAccepted, kRejected };

/// Vote-sending rule: accepted iff the voting timer is over and the result-waiting
/// timer has not expired, voting_deadline <= now < result_waiting_deadline.
Submission accept_vote_submission(std::span<const bts::VoteRecord> batch, double now,
                                  const RoundTimers& timers);

/// What a member broadcasts after counting: its leader and global-best digest.
struct MemberTally {
    MinerId leader = 0;
    crypto::Digest digest{};
    friend bool operator==(const MemberTally&, const MemberTally&) = default;
};

MemberTally summarize(const bts::TallyResult& tally);

struct Decision {
    std::uint64_t round = 0;
    MinerId leader = 0;
    crypto::Digest global_best_digest{};
    std::vector<bts::GlobalBestEntry> global_best;
    std::uint32_t quorum_count = 0;
};

/// floor(2 * size / 3) + 1
std::uint32_t quorum_threshold(std::uint32_t committee_size);

/// Quorum matching: commits the (leader, digest) value held by at least
/// quorum_threshold(size) members; otherwise the round aborts (nullopt).
std::optional<Decision> agree(std::span<const bts::TallyResult> member_tallies,
                              std::uint32_t committee_size, std::uint64_t round);

/// Same rule over already summarized values, as seen by one member.
std::optional<MemberTally> agree_on(std::span<const MemberTally> received, std::uint32_t committee_size,
                                    std::uint32_t* quorum_count = nullptr);

/// Decision log line: round,leader,quorum_count,aborted
std::string decision_log_line(std::uint64_t round, const std::optional<Decision>& decision);

enum class Verdict { kAccept, kDiscard };

struct Verification {
    Verdict verdict = Verdict::kDiscard;
    std::string reason;
};

/// Committee check of a proposed block against the committed decision. The committee
/// rebuilds the block from the producer's declared context and requires the same body.
Verification verify_block(const packing::Block& block, const Decision& decision,
                          const packing::PackingContext& context);

/// Seed the leader and the verifiers use for clustering, derived from the decision.
std::uint64_t packing_seed(const Decision& decision);

}  // namespace pous::committee
