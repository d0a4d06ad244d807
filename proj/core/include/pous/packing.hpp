#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pous/crypto.hpp"
#include "pous/similarity.hpp"

namespace pous::packing {

/// Scaling of waiting time, fee and similarity in the priority rule.
struct PriorityWeights {
    double a = 0.5;
    double b = 2.0;
    double c = 1.0;

    void validate() const;
};

// ---------------------------------------------------------------------------
// Clustering
// ---------------------------------------------------------------------------

struct KMeansOptions {
    std::uint32_t max_iterations = 100;
    double tolerance = 1e-6;  // stop once no centroid moves farther than this
};

struct KMeansResult {
    std::vector<std::uint32_t> assignment;         // per point, 0-based cluster
    std::vector<std::vector<double>> centroids;
    std::vector<double> objective_history;         // WCSS after each assignment step
    std::uint32_t iterations = 0;
};

/// Lloyd's algorithm with k-means++ seeding drawn from `seed`.
KMeansResult kmeans(std::span<const std::vector<double>> points, std::uint32_t k, std::uint64_t seed,
                    const KMeansOptions& options = {});

double within_cluster_ss(std::span<const std::vector<double>> points,
                         std::span<const std::uint32_t> assignment,
                         std::span<const std::vector<double>> centroids);

struct Cluster {
    std::uint32_t id = 0;
    std::vector<std::uint64_t> members;  // transaction ids
    std::vector<double> centroid;
};

struct Clustering {
    std::vector<Cluster> clusters;
    /// Cluster of each user (index user-1); kNoCluster for users absent from the mempool.
    std::vector<std::uint32_t> user_cluster;
    static constexpr std::uint32_t kNoCluster = 0xffffffffu;
};

/// k-means over the distinct source users of the mempool. k larger than the number of
/// distinct users is clamped with a logged warning. Throws RejectedInput on k == 0 or
/// an empty mempool.
Clustering cluster_mempool(std::span<const Transaction> mempool, std::span<const UserVector> vectors,
                           std::uint32_t k, std::uint64_t seed);

double centroid_distance(const UserVector& user, const Cluster& cluster);

/// P = a * (now - submit_time) + b * fee + c / (1 + distance to the cluster centroid).
double tx_priority(const Transaction& tx, double now, const Cluster& cluster, const UserVector& source,
                   const PriorityWeights& weights);

// ---------------------------------------------------------------------------
// Block layout
// ---------------------------------------------------------------------------

/// R-bit field; bit i (1-based) is set when body position i starts a cluster.
class FlagField {
public:
    FlagField() = default;
    explicit FlagField(std::uint32_t bits) : bits_(bits, false) {}

    std::uint32_t size() const { return static_cast<std::uint32_t>(bits_.size()); }
    bool test(std::uint32_t position) const { return bits_.at(position - 1); }
    void set(std::uint32_t position) { bits_.at(position - 1) = true; }
    std::uint32_t popcount() const;

    std::string to_string() const;
    static FlagField parse(std::string_view text);
    /// ceil(R/8) bytes, bit 1 is the MSB of byte 0.
    std::vector<std::uint8_t> to_bytes() const;
    static FlagField from_bytes(std::span<const std::uint8_t> bytes, std::uint32_t bits);

    friend bool operator==(const FlagField&, const FlagField&) = default;

private:
    std::vector<bool> bits_;
};

/// Flag for consecutive non-empty clusters of the given sizes in an R-bit field.
FlagField encode_flag(std::span<const std::uint32_t> cluster_sizes, std::uint32_t capacity);
/// Set-bit positions (1-based cluster start offsets). Throws MalformedFlag.
std::vector<std::uint32_t> decode_flag(const FlagField& flag);
/// Cluster sizes implied by the flag for a body of `body_size` transactions.
std::vector<std::uint32_t> cluster_sizes(const FlagField& flag, std::uint32_t body_size);

struct BlockHeader {
    crypto::Digest prev_hash{};
    crypto::Digest merkle_root{};
    FlagField flag;
    std::uint64_t round = 0;
    MinerId producer = 0;
    double timestamp = 0.0;  // packing time

    std::vector<std::uint8_t> serialize() const;
    crypto::Digest hash() const;
};

std::vector<std::uint32_t> decode_flag(const BlockHeader& header);

struct Block {
    BlockHeader header;
    std::vector<Transaction> body;

    std::vector<std::uint8_t> serialize() const;
    static Block deserialize(std::span<const std::uint8_t> bytes);
};

std::vector<std::uint8_t> serialize_transaction(const Transaction& tx);
/// Bitcoin-style binary Merkle tree over SHA-256 leaf digests (odd levels duplicate the last node).
crypto::Digest merkle_root(std::span<const Transaction> body);

/// Priority ordering key: higher priority first, then earlier submit time, then lower id.
struct RankedTx {
    double priority;
    double submit_time;
    std::uint64_t id;
    std::uint32_t position;  // index into the mempool span
    std::uint32_t cluster;

    bool ranks_before(const RankedTx& other) const;
};

/// Ranks every transaction of the mempool by the priority rule.
std::vector<RankedTx> rank_mempool(const Clustering& clustering, std::span<const Transaction> mempool,
                                   std::span<const UserVector> vectors, const PriorityWeights& weights,
                                   double now);

/// Top-R by priority, laid out cluster-contiguously (clusters ordered by their best
/// member, members by priority), flag bit at each cluster start, Merkle root over the
/// body. Returns nullopt when nothing is selected.
std::optional<Block> pack_block(const Clustering& clustering, std::span<const Transaction> mempool,
                                std::span<const UserVector> vectors, const PriorityWeights& weights,
                                std::uint32_t capacity, double now, const crypto::Digest& prev_hash,
                                std::uint64_t round = 0, MinerId producer = 0);

/// Everything needed to rebuild a block deterministically (leader and verifiers).
struct PackingContext {
    std::span<const Transaction> snapshot;  // the producer's declared mempool
    std::span<const UserVector> vectors;    // user vectors of the producer's view
    PriorityWeights weights;
    std::uint32_t k = 3;
    std::uint64_t seed = 0;
    std::uint32_t capacity = 0;
    double now = 0.0;
};

struct PackResult {
    Clustering clustering;
    std::optional<Block> block;
};

PackResult pack_from_context(const PackingContext& context, const crypto::Digest& prev_hash,
                             std::uint64_t round, MinerId producer);

// ---------------------------------------------------------------------------
// Projection
// ---------------------------------------------------------------------------

struct PcaResult {
    std::vector<std::array<double, 2>> coords;
    std::array<double, 2> variances{};  // eigenvalues of the two kept components
    std::vector<std::vector<double>> components;
};

/// Mean-centred projection on the top-2 covariance eigenvectors (descending eigenvalue;
/// each eigenvector's largest-magnitude component is positive). Missing components
/// of rank-deficient data are zero. Throws RejectedInput with fewer than 2 points.
PcaResult pca_project(std::span<const std::vector<double>> points);

}  // namespace pous::packing
