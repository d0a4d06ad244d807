#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace pous {

/// 1-based user index (users and nodes share one index space in the simulator).
using UserId = std::uint32_t;
/// 1-based miner index.
using MinerId = std::uint32_t;
/// 1-based flat USM index, j = (k-1)*n + l.
using FlatIndex = std::uint64_t;

struct Transaction {
    std::uint64_t id = 0;
    UserId source_user = 1;
    std::uint8_t tx_class = 0;  // 0-based index into the configured ClassSet
    double fee = 0.0;
    std::uint32_t size_bytes = 250;
    double submit_time = 0.0;
};

/// Fixed set of transaction classes; the default is the six classes A..F.
struct ClassSet {
    std::vector<std::string> names{"A", "B", "C", "D", "E", "F"};

    std::size_t size() const { return names.size(); }
    bool contains(std::uint8_t cls) const { return cls < names.size(); }
    static ClassSet with_count(std::size_t count);
};

struct UserVector {
    UserId user = 1;
    std::vector<std::uint32_t> counts;
};

/// Transactions a miner can see: the latest eta committed blocks plus its mempool.
struct DataView {
    std::span<const Transaction> history;
    std::span<const Transaction> mempool;
};

/// A miner's n x n user similarity table. Slots that were not computed are null.
/// Storage is sparse: computed slots are kept sorted by flat index.
class SimilarityMatrix {
public:
    struct Entry {
        FlatIndex index;
        double value;
        friend bool operator==(const Entry&, const Entry&) = default;
    };

    SimilarityMatrix() = default;
    SimilarityMatrix(MinerId owner, std::uint32_t n_users);

    MinerId owner() const { return owner_; }
    std::uint32_t n_users() const { return n_; }

    std::optional<double> at(UserId k, UserId l) const;
    std::optional<double> at_flat(FlatIndex j) const;
    void set(UserId k, UserId l, double value);

    /// Computed slots in ascending flat-index order.
    std::span<const Entry> entries() const { return entries_; }
    std::size_t non_null_count() const { return entries_.size(); }
    /// Number of computed unordered off-diagonal pairs.
    std::size_t computed_pairs() const;

    friend bool operator==(const SimilarityMatrix&, const SimilarityMatrix&) = default;

private:
    friend SimilarityMatrix assemble_matrix(MinerId, std::uint32_t, std::vector<Entry>);

    MinerId owner_ = 0;
    std::uint32_t n_ = 0;
    std::vector<Entry> entries_;
};

/// Builds a matrix from unsorted entries; duplicate indices keep the last value.
SimilarityMatrix assemble_matrix(MinerId owner, std::uint32_t n_users,
                                 std::vector<SimilarityMatrix::Entry> entries);

/// Per-user, per-class transaction counts over history and mempool.
std::vector<UserVector> build_user_vectors(const DataView& view, std::uint32_t n_users,
                                           const ClassSet& classes);

/// 1 / (1 + Euclidean distance). Symmetric, in (0, 1], equal to 1 iff u == v.
double similarity(const UserVector& u, const UserVector& v);
double similarity(std::span<const std::uint32_t> u, std::span<const std::uint32_t> v);

/// Fills at most `budget` unordered pairs in row-major order (1,2),(1,3),...,(2,3),...
/// Both (k,l) and (l,k) are set per pair, plus the diagonal of every visited user.
SimilarityMatrix compute_usm(std::span<const UserVector> vectors, std::uint64_t budget,
                             MinerId owner);

/// Recalculation update: rebuilds vectors from `new_view` and recomputes every
/// non-null slot of `matrix`. The null pattern is preserved.
SimilarityMatrix update_usm(const SimilarityMatrix& matrix, const DataView& new_view,
                            const ClassSet& classes);

FlatIndex flat_index(UserId k, UserId l, std::uint32_t n);
std::pair<UserId, UserId> pair_of(FlatIndex j, std::uint32_t n);

/// Unordered pair at position `rank` (0-based) of the row-major traversal.
std::pair<UserId, UserId> pair_at_rank(std::uint64_t rank, std::uint32_t n);

/// Compressed-row storage of a sparse n x n table, used for cost accounting.
struct CompressedRows {
    std::uint32_t n = 0;
    std::vector<std::uint32_t> row_ptr;  // n + 1 offsets
    std::vector<std::uint32_t> cols;     // 1-based column per stored value
    std::vector<double> values;

    /// Serialized layout: n, nnz, row_ptr, cols, values (u32/u32/f64, little-endian).
    std::vector<std::uint8_t> to_bytes() const;
    static CompressedRows from_bytes(std::span<const std::uint8_t> bytes);
    friend bool operator==(const CompressedRows&, const CompressedRows&) = default;
};

CompressedRows to_compressed_rows(const SimilarityMatrix& matrix);

/// Binary 0/1 table (a vote matrix) in compressed-row form: only the set cells are
/// stored and no value array is needed.
struct BinaryCompressedRows {
    std::uint32_t n = 0;
    std::vector<std::uint32_t> row_ptr;
    std::vector<std::uint32_t> cols;

    /// Serialized layout: n, nnz, row_ptr, cols (u32, little-endian).
    std::vector<std::uint8_t> to_bytes() const;
    std::size_t byte_size() const { return 8 + 4 * (row_ptr.size() + cols.size()); }
};

BinaryCompressedRows binary_compressed_rows(std::uint32_t n, std::span<const FlatIndex> set_cells);

}  // namespace pous
