#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pous/crypto.hpp"
#include "pous/garbled2pc.hpp"
#include "pous/similarity.hpp"

namespace pous::bts {

/// One voter's reports on one similarity entry of one candidate.
struct VoteRecord {
    MinerId voter = 0;
    MinerId candidate = 0;
    FlatIndex entry = 0;
    std::uint8_t x = 0;  // voting report; 0 also encodes abstention
    double y = 0.5;      // prediction report in [0,1]
    bool valid = false;  // voter computed this entry

    friend bool operator==(const VoteRecord&, const VoteRecord&) = default;
};

struct GlobalBestEntry {
    FlatIndex entry = 0;
    MinerId owner = 0;
    double avg_vote = 0.0;
    std::optional<double> value;  // filled once the winning candidate reveals it

    friend bool operator==(const GlobalBestEntry&, const GlobalBestEntry&) = default;
};

struct TallyResult {
    std::uint32_t miners = 0;
    std::uint32_t users = 0;
    /// Per candidate (index i-1): (entry, x-bar) for every entry that received a record.
    std::vector<std::vector<std::pair<FlatIndex, double>>> avg_votes;
    /// V_i per candidate (index i-1).
    std::vector<double> vote_counts;
    /// Winning candidate per entry, ascending entry order; entries no candidate
    /// received an approval on are absent.
    std::vector<GlobalBestEntry> global_best;
    MinerId leader = 0;

    double avg_vote(MinerId candidate, FlatIndex entry) const;
    /// SHA-256 over the leader and the (entry, owner) pairs of the global best.
    crypto::Digest digest() const;
};

/// Streaming tally: candidates are fed one at a time, so callers never have to hold
/// every record of a round at once. `denominator` is the number of voters per
/// candidate (m - 1 when every other miner votes).
class TallyBuilder {
public:
    TallyBuilder(std::uint32_t miners, std::uint32_t users, double denominator);

    /// Records must all name `candidate`; duplicates raise RejectedInput.
    void add_candidate(MinerId candidate, std::span<const VoteRecord> records);
    TallyResult finish() &&;

private:
    TallyResult result_;
    double denominator_;
    std::vector<bool> seen_;
    struct Best {
        FlatIndex entry;
        double avg_vote;
        MinerId owner;
    };
    std::vector<Best> best_scratch_;
};

/// x-bar_ij = (1/(m-1)) sum_r x_ij^r, V_i = sum_j x-bar_ij, global best by argmax x-bar
/// (ties to the lowest miner index), leader = argmax V_i (ties to the lowest index).
TallyResult tally(std::span<const VoteRecord> records, std::uint32_t m, std::uint32_t n);

/// Attaches winning values to the global best from the candidates' matrices
/// (indexed by miner - 1).
void reveal_global_best(TallyResult& result, std::span<const SimilarityMatrix> matrices);

// ---------------------------------------------------------------------------
// Scoring
// ---------------------------------------------------------------------------

/// Binary quadratic rule: H(y,1) = 2y - y^2, H(y,0) = 1 - y^2.
double quadratic_score(double y, bool omega);

/// y' = y_ref + delta if x = 1, y_ref - delta if x = 0, delta = min(y_ref, 1 - y_ref).
double shifted_prediction(bool x, double y_ref);

struct ExpectedScores {
    double of_belief = 0.0;      // E[p]
    double of_prediction = 0.0;  // E[y]
    double loss = 0.0;           // E[p] - E[y]
};

ExpectedScores expected_scores(double p, double y);

/// Expected information plus prediction score of a voter with posterior p (the
/// probability that the peer approves) who reports (x, y) against reference y_ref.
double expected_total_score(double p, bool x_report, double y_report, double y_ref);

struct ScoreSheet {
    MinerId voter = 0;
    double information = 0.0;
    double prediction = 0.0;
    std::size_t scored_entries = 0;
    double total() const { return information + prediction; }
};

/// Reference and peer of voter r among the voters of one candidate. `voters` is the
/// candidate's voter list in ascending order; the reference is the next voter after r
/// (cyclically) and the peer the one after that. With only two voters the peer
/// coincides with the reference.
struct ReferencePeer {
    MinerId reference = 0;
    MinerId peer = 0;
};
ReferencePeer reference_and_peer(MinerId r, std::span<const MinerId> voters);

/// Adds one candidate's contribution to every voter's sheet (sheets indexed by voter-1).
void score_candidate(MinerId candidate, std::span<const VoteRecord> records,
                     std::span<const MinerId> voters, std::vector<ScoreSheet>& sheets);

/// U^r over all candidates i != r when every other miner votes on each candidate.
/// Throws ConfigError when m < 3.
ScoreSheet reward(MinerId r, std::span<const VoteRecord> records, std::uint32_t m,
                  std::uint32_t n);

/// All voters' sheets at once (index voter-1).
std::vector<ScoreSheet> rewards(std::span<const VoteRecord> records, std::uint32_t m,
                                std::uint32_t n);

// ---------------------------------------------------------------------------
// Casting votes
// ---------------------------------------------------------------------------

/// The candidate side of a vote: compares one of the candidate's entries against the
/// voter's value without revealing the candidate's value. Returns nullopt when the
/// candidate has no value for the entry.
class CandidateChannel {
public:
    virtual ~CandidateChannel() = default;
    virtual MinerId candidate() const = 0;
    virtual std::optional<bool> compare(FlatIndex entry, double voter_value) = 0;
};

/// Garbled-circuit channel: the candidate garbles a fresh comparator per entry and the
/// voter obtains its input labels by OT.
class SecureChannel final : public CandidateChannel {
public:
    SecureChannel(const SimilarityMatrix& candidate_usm, double theta, unsigned bitwidth,
                  std::uint64_t seed, gc::ObliviousTransfer& ot);
    MinerId candidate() const override { return usm_.owner(); }
    std::optional<bool> compare(FlatIndex entry, double voter_value) override;

    std::size_t bytes_exchanged() const { return bytes_; }
    std::size_t comparisons() const { return comparisons_; }

private:
    const SimilarityMatrix& usm_;
    double theta_;
    unsigned bitwidth_;
    std::uint64_t seed_;
    gc::ObliviousTransfer& ot_;
    std::size_t bytes_ = 0;
    std::size_t comparisons_ = 0;
};

/// Plaintext fixed-point channel with the comparator's exact predicate.
class PlainChannel final : public CandidateChannel {
public:
    PlainChannel(const SimilarityMatrix& candidate_usm, double theta, unsigned bitwidth);
    MinerId candidate() const override { return usm_.owner(); }
    std::optional<bool> compare(FlatIndex entry, double voter_value) override;

private:
    const SimilarityMatrix& usm_;
    unsigned bitwidth_;
    gc::FixedPoint theta_;
};

/// Chooses the prediction report after the votes on one candidate are known.
/// Arguments: approvals, valid entries. The honest default is the Laplace posterior
/// (approvals + 1) / (valid + 2), shared by every entry of the candidate.
using PredictionStrategy = std::function<double(std::size_t approvals, std::size_t valid)>;
double honest_prediction(std::size_t approvals, std::size_t valid);

struct CastOptions {
    bool include_abstentions = true;
    PredictionStrategy prediction = honest_prediction;
};

/// Votes on every off-diagonal entry the voter computed; entries null in the voter's
/// matrix become abstentions (x = 0, valid = false). A protocol fault on one entry is
/// logged and recorded as an abstention.
std::vector<VoteRecord> cast_votes(const SimilarityMatrix& voter_usm, CandidateChannel& channel,
                                   const CastOptions& options = {});

/// CSV row (round, voter, candidate, entry, x, y, valid).
std::string to_csv_row(std::uint64_t round, const VoteRecord& record);
inline constexpr const char* kVoteCsvHeader = "round,voter,candidate,entry,x,y,valid";

}  // namespace pous::bts
