#include "pous/bts.hpp"

#include <algorithm>
#include <map>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "pous/errors.hpp"

namespace pous::bts {

namespace {

// Sorts a vector made of already sorted runs by merging adjacent runs
// pairwise. Works for any input, it is just fastest when runs are long.
template <class T, class Cmp>
void merge_sorted_runs(std::vector<T>& v, Cmp cmp) {
    std::vector<std::size_t> bounds{0};
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (!cmp(v[i - 1], v[i])) bounds.push_back(i);
    }
    bounds.push_back(v.size());
    while (bounds.size() > 2) {
        std::vector<std::size_t> next{0};
        for (std::size_t i = 0; i + 2 < bounds.size(); i += 2) {
            std::inplace_merge(v.begin() + bounds[i], v.begin() + bounds[i + 1], v.begin() + bounds[i + 2], cmp);
            next.push_back(bounds[i + 2]);
        }
        if (bounds.size() % 2 == 0) next.push_back(bounds.back());
        bounds = std::move(next);
    }
}

}  // namespace

double TallyResult::avg_vote(MinerId candidate, FlatIndex entry) const {
    if (candidate < 1 || candidate > avg_votes.size()) {
        throw RejectedInput(fmt::format("candidate {} outside 1..{}", candidate, avg_votes.size()));
    }
    const auto& row = avg_votes[candidate - 1];
    auto it = std::lower_bound(row.begin(), row.end(), entry,
                               [](const auto& p, FlatIndex e) { return p.first < e; });
    return (it != row.end() && it->first == entry) ? it->second : 0.0;
}

crypto::Digest TallyResult::digest() const {
    crypto::Sha256 h;
    h.update("pous.tally").update_u64(leader).update_u64(global_best.size());
    for (const auto& g : global_best) h.update_u64(g.entry).update_u64(g.owner);
    return h.finish();
}

TallyBuilder::TallyBuilder(std::uint32_t miners, std::uint32_t users, double denominator)
    : denominator_(denominator), seen_(miners, false) {
    if (miners < 2) throw ConfigError(fmt::format("tally needs at least 2 miners, got {}", miners));
    if (!(denominator > 0.0)) throw ConfigError("tally denominator must be positive");
    result_.miners = miners;
    result_.users = users;
    result_.avg_votes.resize(miners);
    result_.vote_counts.assign(miners, 0.0);
}

void TallyBuilder::add_candidate(MinerId candidate, std::span<const VoteRecord> records) {
    const std::uint32_t m = result_.miners;
    if (candidate < 1 || candidate > m) throw RejectedInput(fmt::format("candidate {} outside 1..{}", candidate, m));
    if (seen_[candidate - 1]) throw RejectedInput(fmt::format("candidate {} tallied twice", candidate));
    seen_[candidate - 1] = true;

    struct Key {
        FlatIndex entry;
        MinerId voter;
        std::uint8_t x;
    };
    std::vector<Key> sorted;
    sorted.reserve(records.size());
    for (const auto& r : records) {
        if (r.candidate != candidate) {
            throw RejectedInput(fmt::format("record for candidate {} fed as candidate {}", r.candidate, candidate));
        }
        if (r.voter < 1 || r.voter > m || r.voter == candidate) {
            throw RejectedInput(fmt::format("invalid voter {} for candidate {}", r.voter, candidate));
        }
        if (r.x > 1 || (!r.valid && r.x != 0) || !(r.y >= 0.0 && r.y <= 1.0)) {
            throw RejectedInput(fmt::format("malformed report from voter {} on entry {}", r.voter, r.entry));
        }
        sorted.push_back(Key{r.entry, r.voter, r.x});
    }
    merge_sorted_runs(sorted, [](const Key& a, const Key& b) {
        return a.entry != b.entry ? a.entry < b.entry : a.voter < b.voter;
    });

    auto& row = result_.avg_votes[candidate - 1];
    row.clear();
    double v = 0.0;
    for (std::size_t i = 0; i < sorted.size();) {
        const FlatIndex entry = sorted[i].entry;
        std::uint32_t sum = 0;
        std::size_t j = i;
        for (; j < sorted.size() && sorted[j].entry == entry; ++j) {
            if (j > i && sorted[j].voter == sorted[j - 1].voter) {
                throw RejectedInput(fmt::format("duplicate record (voter {}, candidate {}, entry {})", sorted[j].voter,
                                                candidate, entry));
            }
            sum += sorted[j].x;
        }
        const double avg = sum / denominator_;
        row.emplace_back(entry, avg);
        v += avg;
        if (sum > 0) best_scratch_.push_back(Best{entry, avg, candidate});
        i = j;
    }
    result_.vote_counts[candidate - 1] = v;
}

TallyResult TallyBuilder::finish() && {
    merge_sorted_runs(best_scratch_, [](const Best& a, const Best& b) {
        if (a.entry != b.entry) return a.entry < b.entry;
        if (a.avg_vote != b.avg_vote) return a.avg_vote > b.avg_vote;
        return a.owner < b.owner;
    });
    for (std::size_t i = 0; i < best_scratch_.size(); ++i) {
        const Best& b = best_scratch_[i];
        if (i == 0 || b.entry != best_scratch_[i - 1].entry) {
            result_.global_best.push_back(GlobalBestEntry{b.entry, b.owner, b.avg_vote, std::nullopt});
        }
    }
    best_scratch_.clear();

    result_.leader = 1;
    for (MinerId i = 2; i <= result_.miners; ++i) {
        if (result_.vote_counts[i - 1] > result_.vote_counts[result_.leader - 1]) result_.leader = i;
    }
    return std::move(result_);
}

TallyResult tally(std::span<const VoteRecord> records, std::uint32_t m, std::uint32_t n) {
    if (m < 2) throw ConfigError(fmt::format("tally needs at least 2 miners, got {}", m));
    std::vector<std::vector<VoteRecord>> by_candidate(m);
    for (const auto& r : records) {
        if (r.candidate < 1 || r.candidate > m) {
            throw RejectedInput(fmt::format("candidate {} outside 1..{}", r.candidate, m));
        }
        by_candidate[r.candidate - 1].push_back(r);
    }
    TallyBuilder builder(m, n, static_cast<double>(m - 1));
    for (MinerId i = 1; i <= m; ++i) builder.add_candidate(i, by_candidate[i - 1]);
    return std::move(builder).finish();
}

void reveal_global_best(TallyResult& result, std::span<const SimilarityMatrix> matrices) {
    for (auto& g : result.global_best) {
        if (g.owner < 1 || g.owner > matrices.size()) {
            throw RejectedInput(fmt::format("no matrix for global-best owner {}", g.owner));
        }
        g.value = matrices[g.owner - 1].at_flat(g.entry);
    }
}

// ---------------------------------------------------------------------------

namespace {

void check_unit(double v, const char* what) {
    if (!(v >= 0.0 && v <= 1.0)) throw RejectedInput(fmt::format("{} = {} outside [0, 1]", what, v));
}

}  // namespace

double quadratic_score(double y, bool omega) {
    check_unit(y, "prediction");
    return omega ? 2.0 * y - y * y : 1.0 - y * y;
}

double shifted_prediction(bool x, double y_ref) {
    check_unit(y_ref, "reference prediction");
    const double delta = std::min(y_ref, 1.0 - y_ref);
    return std::clamp(x ? y_ref + delta : y_ref - delta, 0.0, 1.0);
}

ExpectedScores expected_scores(double p, double y) {
    check_unit(p, "belief");
    check_unit(y, "prediction");
    ExpectedScores e;
    e.of_belief = p * quadratic_score(p, true) + (1.0 - p) * quadratic_score(p, false);
    e.of_prediction = p * quadratic_score(y, true) + (1.0 - p) * quadratic_score(y, false);
    e.loss = e.of_belief - e.of_prediction;
    return e;
}

double expected_total_score(double p, bool x_report, double y_report, double y_ref) {
    const double shifted = shifted_prediction(x_report, y_ref);
    return expected_scores(p, shifted).of_prediction + expected_scores(p, y_report).of_prediction;
}

ReferencePeer reference_and_peer(MinerId r, std::span<const MinerId> voters) {
    if (voters.size() < 2) throw ConfigError("scoring needs at least two voters per candidate");
    auto it = std::find(voters.begin(), voters.end(), r);
    if (it == voters.end()) throw RejectedInput(fmt::format("miner {} is not a voter of this candidate", r));
    const std::size_t pos = static_cast<std::size_t>(it - voters.begin());
    ReferencePeer rp;
    rp.reference = voters[(pos + 1) % voters.size()];
    rp.peer = voters[(pos + 2) % voters.size()];
    if (rp.peer == r) rp.peer = rp.reference;
    return rp;
}

void score_candidate(MinerId candidate, std::span<const VoteRecord> records, std::span<const MinerId> voters,
                     std::vector<ScoreSheet>& sheets) {
    std::map<std::pair<MinerId, FlatIndex>, const VoteRecord*> index;
    std::map<MinerId, const VoteRecord*> any_of_voter;
    for (const auto& rec : records) {
        if (rec.candidate != candidate) continue;
        if (!index.emplace(std::make_pair(rec.voter, rec.entry), &rec).second) {
            throw RejectedInput(fmt::format("duplicate record (voter {}, candidate {}, entry {})", rec.voter, candidate,
                                            rec.entry));
        }
        any_of_voter.emplace(rec.voter, &rec);
    }
    auto find = [&](MinerId v, FlatIndex e) -> const VoteRecord* {
        auto it = index.find({v, e});
        return it == index.end() ? nullptr : it->second;
    };

    for (MinerId r : voters) {
        if (r < 1 || r > sheets.size()) throw RejectedInput(fmt::format("no score sheet for voter {}", r));
        const ReferencePeer rp = reference_and_peer(r, voters);
        ScoreSheet& sheet = sheets[r - 1];
        sheet.voter = r;
        for (auto it = index.lower_bound({r, 0}); it != index.end() && it->first.first == r; ++it) {
            const VoteRecord& own = *it->second;
            if (!own.valid) continue;
            const VoteRecord* peer = find(rp.peer, own.entry);
            if (peer == nullptr || !peer->valid) continue;
            const VoteRecord* ref = find(rp.reference, own.entry);
            if (ref == nullptr) {
                // honest reports share y per candidate, so any record of the reference carries it
                auto a = any_of_voter.find(rp.reference);
                if (a == any_of_voter.end()) continue;
                ref = a->second;
            }
            const bool omega = peer->x == 1;
            sheet.information += quadratic_score(shifted_prediction(own.x == 1, ref->y), omega);
            sheet.prediction += quadratic_score(own.y, omega);
            ++sheet.scored_entries;
        }
    }
}

std::vector<ScoreSheet> rewards(std::span<const VoteRecord> records, std::uint32_t m, std::uint32_t /*n*/) {
    if (m < 3) throw ConfigError(fmt::format("rewards need at least 3 miners, got {}", m));
    std::vector<std::vector<VoteRecord>> by_candidate(m);
    for (const auto& r : records) {
        if (r.candidate < 1 || r.candidate > m) {
            throw RejectedInput(fmt::format("candidate {} outside 1..{}", r.candidate, m));
        }
        by_candidate[r.candidate - 1].push_back(r);
    }
    std::vector<ScoreSheet> sheets(m);
    for (MinerId r = 1; r <= m; ++r) sheets[r - 1].voter = r;
    std::vector<MinerId> voters;
    for (MinerId i = 1; i <= m; ++i) {
        voters.clear();
        for (MinerId v = 1; v <= m; ++v) {
            if (v != i) voters.push_back(v);
        }
        score_candidate(i, by_candidate[i - 1], voters, sheets);
    }
    return sheets;
}

ScoreSheet reward(MinerId r, std::span<const VoteRecord> records, std::uint32_t m, std::uint32_t n) {
    if (m < 3) throw ConfigError(fmt::format("rewards need at least 3 miners, got {}", m));
    if (r < 1 || r > m) throw RejectedInput(fmt::format("voter {} outside 1..{}", r, m));
    return rewards(records, m, n)[r - 1];
}

// ---------------------------------------------------------------------------

SecureChannel::SecureChannel(const SimilarityMatrix& candidate_usm, double theta, unsigned bitwidth,
                             std::uint64_t seed, gc::ObliviousTransfer& ot)
    : usm_(candidate_usm), theta_(theta), bitwidth_(bitwidth), seed_(seed), ot_(ot) {}

std::optional<bool> SecureChannel::compare(FlatIndex entry, double voter_value) {
    const auto value = usm_.at_flat(entry);
    if (!value) return std::nullopt;
    const auto result =
        gc::secure_compare(*value, voter_value, theta_, bitwidth_, crypto::derive_seed(seed_, "entry", entry), ot_);
    bytes_ += result.cost.circuit_bytes + result.cost.ot_bytes;
    ++comparisons_;
    return result.within;
}

PlainChannel::PlainChannel(const SimilarityMatrix& candidate_usm, double theta, unsigned bitwidth)
    : usm_(candidate_usm), bitwidth_(bitwidth), theta_(gc::FixedPoint::encode(theta, bitwidth)) {}

std::optional<bool> PlainChannel::compare(FlatIndex entry, double voter_value) {
    const auto value = usm_.at_flat(entry);
    if (!value) return std::nullopt;
    return gc::within_threshold(gc::FixedPoint::encode(*value, bitwidth_), gc::FixedPoint::encode(voter_value, bitwidth_),
                                theta_);
}

double honest_prediction(std::size_t approvals, std::size_t valid) {
    return (static_cast<double>(approvals) + 1.0) / (static_cast<double>(valid) + 2.0);
}

std::vector<VoteRecord> cast_votes(const SimilarityMatrix& voter_usm, CandidateChannel& channel,
                                   const CastOptions& options) {
    const MinerId voter = voter_usm.owner();
    const MinerId candidate = channel.candidate();
    if (voter == candidate) throw RejectedInput(fmt::format("miner {} cannot vote on itself", voter));
    const std::uint32_t n = voter_usm.n_users();

    std::vector<VoteRecord> records;
    std::size_t approvals = 0;
    std::size_t valid = 0;
    for (const auto& e : voter_usm.entries()) {
        if ((e.index - 1) % (FlatIndex{n} + 1) == 0) continue;  // diagonal
        VoteRecord rec{voter, candidate, e.index, 0, 0.5, true};
        try {
            const auto within = channel.compare(e.index, e.value);
            rec.x = (within && *within) ? 1 : 0;
        } catch (const ProtocolAbort& err) {
            spdlog::warn("vote {}->{} entry {}: protocol fault, recorded as abstention: {}", voter, candidate, e.index,
                         err.what());
            rec.valid = false;
        } catch (const CorruptedCircuit& err) {
            spdlog::warn("vote {}->{} entry {}: corrupted circuit, recorded as abstention: {}", voter, candidate,
                         e.index, err.what());
            rec.valid = false;
        }
        if (rec.valid) {
            ++valid;
            approvals += rec.x;
        }
        records.push_back(rec);
    }

    if (options.include_abstentions) {
        std::vector<VoteRecord> all;
        all.reserve(std::size_t{n} * n);
        std::size_t next = 0;
        for (UserId k = 1; k <= n; ++k) {
            for (UserId l = 1; l <= n; ++l) {
                if (k == l) continue;
                const FlatIndex j = flat_index(k, l, n);
                if (next < records.size() && records[next].entry == j) {
                    all.push_back(records[next++]);
                } else {
                    all.push_back(VoteRecord{voter, candidate, j, 0, 0.5, false});
                }
            }
        }
        records = std::move(all);
    }

    const double y = options.prediction ? options.prediction(approvals, valid) : honest_prediction(approvals, valid);
    check_unit(y, "prediction");
    for (auto& r : records) r.y = y;
    return records;
}

std::string to_csv_row(std::uint64_t round, const VoteRecord& r) {
    return fmt::format("{},{},{},{},{},{},{}", round, r.voter, r.candidate, r.entry, static_cast<unsigned>(r.x), r.y,
                       r.valid ? 1 : 0);
}

}  // namespace pous::bts
