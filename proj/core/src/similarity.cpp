#include "pous/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include <fmt/format.h>

#include "pous/errors.hpp"

namespace pous {

ClassSet ClassSet::with_count(std::size_t count) {
    if (count == 0) {
        throw RejectedInput("class set must not be empty");
    }
    ClassSet set;
    set.names.clear();
    for (std::size_t i = 0; i < count; ++i) {
        set.names.push_back(i < 26 ? std::string(1, static_cast<char>('A' + i)) : fmt::format("C{}", i));
    }
    return set;
}

// ---------------------------------------------------------------------------

SimilarityMatrix::SimilarityMatrix(MinerId owner, std::uint32_t n_users) : owner_(owner), n_(n_users) {}

std::optional<double> SimilarityMatrix::at(UserId k, UserId l) const { return at_flat(flat_index(k, l, n_)); }

std::optional<double> SimilarityMatrix::at_flat(FlatIndex j) const {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), j,
                               [](const Entry& e, FlatIndex idx) { return e.index < idx; });
    if (it == entries_.end() || it->index != j) {
        return std::nullopt;
    }
    return it->value;
}

void SimilarityMatrix::set(UserId k, UserId l, double value) {
    const FlatIndex j = flat_index(k, l, n_);
    auto it = std::lower_bound(entries_.begin(), entries_.end(), j,
                               [](const Entry& e, FlatIndex idx) { return e.index < idx; });
    if (it != entries_.end() && it->index == j) {
        it->value = value;
    } else {
        entries_.insert(it, Entry{j, value});
    }
}

std::size_t SimilarityMatrix::computed_pairs() const {
    std::size_t upper = 0;
    for (const auto& e : entries_) {
        auto [k, l] = pair_of(e.index, n_);
        if (k < l) {
            ++upper;
        }
    }
    return upper;
}

SimilarityMatrix assemble_matrix(MinerId owner, std::uint32_t n_users, std::vector<SimilarityMatrix::Entry> entries) {
    std::stable_sort(entries.begin(), entries.end(),
                     [](const auto& a, const auto& b) { return a.index < b.index; });
    // keep the last value written for a duplicated slot
    std::vector<SimilarityMatrix::Entry> unique;
    unique.reserve(entries.size());
    for (const auto& e : entries) {
        if (!unique.empty() && unique.back().index == e.index) {
            unique.back().value = e.value;
        } else {
            unique.push_back(e);
        }
    }
    SimilarityMatrix m(owner, n_users);
    m.entries_ = std::move(unique);
    return m;
}

// ---------------------------------------------------------------------------

std::vector<UserVector> build_user_vectors(const DataView& view, std::uint32_t n_users, const ClassSet& classes) {
    std::vector<UserVector> vectors(n_users);
    for (std::uint32_t u = 0; u < n_users; ++u) {
        vectors[u].user = u + 1;
        vectors[u].counts.assign(classes.size(), 0);
    }
    auto count = [&](std::span<const Transaction> txs) {
        for (const auto& tx : txs) {
            if (tx.source_user < 1 || tx.source_user > n_users) {
                throw RejectedInput(fmt::format("transaction {} has user {} outside 1..{}", tx.id, tx.source_user, n_users));
            }
            if (!classes.contains(tx.tx_class)) {
                throw RejectedInput(fmt::format("transaction {} has unknown class {}", tx.id, tx.tx_class));
            }
            ++vectors[tx.source_user - 1].counts[tx.tx_class];
        }
    };
    count(view.history);
    count(view.mempool);
    return vectors;
}

double similarity(std::span<const std::uint32_t> u, std::span<const std::uint32_t> v) {
    if (u.size() != v.size()) {
        throw RejectedInput(fmt::format("user vectors differ in dimension ({} vs {})", u.size(), v.size()));
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double d = static_cast<double>(u[i]) - static_cast<double>(v[i]);
        sum += d * d;
    }
    return 1.0 / (1.0 + std::sqrt(sum));
}

double similarity(const UserVector& u, const UserVector& v) { return similarity(u.counts, v.counts); }

std::pair<UserId, UserId> pair_at_rank(std::uint64_t rank, std::uint32_t n) {
    // row k (1-based) holds n - k pairs
    std::uint64_t remaining = rank;
    for (UserId k = 1; k < n; ++k) {
        const std::uint64_t row = n - k;
        if (remaining < row) {
            return {k, static_cast<UserId>(k + 1 + remaining)};
        }
        remaining -= row;
    }
    throw RejectedInput(fmt::format("pair rank {} out of range for n={}", rank, n));
}

SimilarityMatrix compute_usm(std::span<const UserVector> vectors, std::uint64_t budget, MinerId owner) {
    const auto n = static_cast<std::uint32_t>(vectors.size());
    const std::uint64_t total_pairs = n < 2 ? 0 : std::uint64_t{n} * (n - 1) / 2;
    const std::uint64_t pairs = std::min(budget, total_pairs);

    std::vector<SimilarityMatrix::Entry> entries;
    entries.reserve(pairs * 2 + std::min<std::uint64_t>(n, pairs * 2));
    std::vector<bool> visited(n, false);
    std::uint64_t done = 0;
    for (UserId k = 1; k < n && done < pairs; ++k) {
        for (UserId l = k + 1; l <= n && done < pairs; ++l, ++done) {
            const double s = similarity(vectors[k - 1], vectors[l - 1]);
            entries.push_back({flat_index(k, l, n), s});
            entries.push_back({flat_index(l, k, n), s});
            visited[k - 1] = true;
            visited[l - 1] = true;
        }
    }
    for (UserId u = 1; u <= n; ++u) {
        if (visited[u - 1]) {
            entries.push_back({flat_index(u, u, n), 1.0});
        }
    }
    return assemble_matrix(owner, n, std::move(entries));
}

SimilarityMatrix update_usm(const SimilarityMatrix& matrix, const DataView& new_view, const ClassSet& classes) {
    const auto vectors = build_user_vectors(new_view, matrix.n_users(), classes);
    std::vector<SimilarityMatrix::Entry> entries;
    entries.reserve(matrix.non_null_count());
    for (const auto& e : matrix.entries()) {
        auto [k, l] = pair_of(e.index, matrix.n_users());
        entries.push_back({e.index, k == l ? 1.0 : similarity(vectors[k - 1], vectors[l - 1])});
    }
    return assemble_matrix(matrix.owner(), matrix.n_users(), std::move(entries));
}

FlatIndex flat_index(UserId k, UserId l, std::uint32_t n) {
    if (k < 1 || k > n || l < 1 || l > n) {
        throw RejectedInput(fmt::format("user pair ({},{}) outside 1..{}", k, l, n));
    }
    return FlatIndex{k - 1} * n + l;
}

std::pair<UserId, UserId> pair_of(FlatIndex j, std::uint32_t n) {
    if (n == 0 || j < 1 || j > FlatIndex{n} * n) {
        throw RejectedInput(fmt::format("flat index {} outside 1..{}", j, FlatIndex{n} * n));
    }
    const FlatIndex zero_based = j - 1;
    return {static_cast<UserId>(zero_based / n + 1), static_cast<UserId>(zero_based % n + 1)};
}

// ---------------------------------------------------------------------------

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &v, sizeof(bits));
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
}

struct Reader {
    std::span<const std::uint8_t> bytes;
    std::size_t pos = 0;

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(bytes[pos++]) << (8 * i);
        }
        return v;
    }
    double f64() {
        need(8);
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) {
            bits |= static_cast<std::uint64_t>(bytes[pos++]) << (8 * i);
        }
        double v = 0;
        std::memcpy(&v, &bits, sizeof(v));
        return v;
    }
    void need(std::size_t count) const {
        if (pos + count > bytes.size()) {
            throw RejectedInput("compressed rows: truncated input");
        }
    }
};

}  // namespace

std::vector<std::uint8_t> CompressedRows::to_bytes() const {
    std::vector<std::uint8_t> out;
    out.reserve(8 + row_ptr.size() * 4 + cols.size() * 12);
    put_u32(out, n);
    put_u32(out, static_cast<std::uint32_t>(cols.size()));
    for (auto v : row_ptr) put_u32(out, v);
    for (auto v : cols) put_u32(out, v);
    for (auto v : values) put_f64(out, v);
    return out;
}

CompressedRows CompressedRows::from_bytes(std::span<const std::uint8_t> bytes) {
    Reader r{bytes};
    CompressedRows rows;
    rows.n = r.u32();
    const std::uint32_t nnz = r.u32();
    rows.row_ptr.resize(rows.n + 1);
    for (auto& v : rows.row_ptr) v = r.u32();
    rows.cols.resize(nnz);
    for (auto& v : rows.cols) v = r.u32();
    rows.values.resize(nnz);
    for (auto& v : rows.values) v = r.f64();
    if (r.pos != bytes.size()) {
        throw RejectedInput("compressed rows: trailing bytes");
    }
    return rows;
}

CompressedRows to_compressed_rows(const SimilarityMatrix& matrix) {
    CompressedRows rows;
    rows.n = matrix.n_users();
    rows.row_ptr.assign(rows.n + 1, 0);
    for (const auto& e : matrix.entries()) {
        auto [k, l] = pair_of(e.index, rows.n);
        ++rows.row_ptr[k];
        rows.cols.push_back(l);
        rows.values.push_back(e.value);
    }
    for (std::uint32_t i = 0; i < rows.n; ++i) {
        rows.row_ptr[i + 1] += rows.row_ptr[i];
    }
    return rows;
}

std::vector<std::uint8_t> BinaryCompressedRows::to_bytes() const {
    std::vector<std::uint8_t> out;
    out.reserve(8 + row_ptr.size() * 4 + cols.size() * 4);
    put_u32(out, n);
    put_u32(out, static_cast<std::uint32_t>(cols.size()));
    for (auto v : row_ptr) put_u32(out, v);
    for (auto v : cols) put_u32(out, v);
    return out;
}

BinaryCompressedRows binary_compressed_rows(std::uint32_t n, std::span<const FlatIndex> set_cells) {
    std::vector<FlatIndex> cells(set_cells.begin(), set_cells.end());
    if (!std::is_sorted(cells.begin(), cells.end())) std::sort(cells.begin(), cells.end());
    cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
    BinaryCompressedRows rows;
    rows.n = n;
    rows.row_ptr.assign(n + 1, 0);
    for (auto j : cells) {
        auto [k, l] = pair_of(j, n);
        ++rows.row_ptr[k];
        rows.cols.push_back(l);
    }
    for (std::uint32_t i = 0; i < n; ++i) {
        rows.row_ptr[i + 1] += rows.row_ptr[i];
    }
    return rows;
}

}  // namespace pous
