#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "pous/errors.hpp"
#include "pous/similarity.hpp"

using namespace pous;

namespace {

Transaction tx(std::uint64_t id, UserId user, std::uint8_t cls) {
    Transaction t;
    t.id = id;
    t.source_user = user;
    t.tx_class = cls;
    return t;
}

// Independent brute-force distance, no shared code with the library.
double oracle_similarity(const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        s += d * d;
    }
    return 1.0 / (1.0 + std::sqrt(s));
}

std::vector<UserVector> random_vectors(std::uint32_t n, std::uint32_t dims, std::mt19937_64& rng) {
    std::uniform_int_distribution<std::uint32_t> c(0, 6);
    std::vector<UserVector> v(n);
    for (UserId u = 1; u <= n; ++u) {
        v[u - 1].user = u;
        for (std::uint32_t d = 0; d < dims; ++d) v[u - 1].counts.push_back(c(rng));
    }
    return v;
}

}  // namespace

TEST(UserVectors, CountsPerClassAcrossHistoryAndMempool) {
    std::vector<Transaction> history{tx(1, 1, 0), tx(2, 1, 0), tx(3, 1, 1)};
    std::vector<Transaction> mempool{tx(4, 1, 0), tx(5, 1, 1), tx(6, 1, 1), tx(7, 1, 1)};
    const auto v = build_user_vectors({history, mempool}, 2, ClassSet::with_count(4));
    ASSERT_EQ(v.size(), 2u);
    EXPECT_EQ(v[0].counts, (std::vector<std::uint32_t>{3, 4, 0, 0}));
    EXPECT_EQ(v[1].counts, (std::vector<std::uint32_t>{0, 0, 0, 0}));
}

TEST(UserVectors, EmptyViewGivesZeroVectors) {
    const auto v = build_user_vectors({}, 2, ClassSet{});
    ASSERT_EQ(v.size(), 2u);
    for (const auto& u : v) EXPECT_EQ(u.counts, std::vector<std::uint32_t>(6, 0));
}

TEST(UserVectors, RandomViewMatchesCountingLoop) {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<UserId> user(1, 8);
    std::uniform_int_distribution<int> cls(0, 5);
    std::vector<Transaction> mempool;
    for (std::uint64_t i = 1; i <= 50; ++i) mempool.push_back(tx(i, user(rng), static_cast<std::uint8_t>(cls(rng))));
    const auto v = build_user_vectors({{}, mempool}, 8, ClassSet{});
    std::uint32_t counts[8][6] = {};
    for (const auto& t : mempool) counts[t.source_user - 1][t.tx_class]++;
    for (int u = 0; u < 8; ++u) {
        for (int c = 0; c < 6; ++c) EXPECT_EQ(v[u].counts[c], counts[u][c]);
    }
}

TEST(UserVectors, RejectsBadUserOrClass) {
    std::vector<Transaction> bad_user{tx(1, 3, 0)};
    EXPECT_THROW(build_user_vectors({{}, bad_user}, 2, ClassSet{}), RejectedInput);
    std::vector<Transaction> bad_class{tx(1, 1, 9)};
    EXPECT_THROW(build_user_vectors({{}, bad_class}, 2, ClassSet{}), RejectedInput);
}

TEST(Similarity, KnownValues) {
    UserVector u{1, {3, 4, 0, 0}}, z{2, {0, 0, 0, 0}};
    EXPECT_DOUBLE_EQ(similarity(u, u), 1.0);
    EXPECT_NEAR(similarity(u, z), 1.0 / 6.0, 1e-15);
    UserVector short_vec{3, {1, 2}};
    EXPECT_THROW(similarity(u, short_vec), RejectedInput);
}

TEST(Similarity, SymmetricOnRandomPairs) {
    std::mt19937_64 rng(11);
    const auto v = random_vectors(200, 6, rng);
    for (std::size_t i = 0; i + 1 < v.size(); i += 2) {
        EXPECT_EQ(similarity(v[i], v[i + 1]), similarity(v[i + 1], v[i]));
        EXPECT_NEAR(similarity(v[i], v[i + 1]), oracle_similarity(v[i].counts, v[i + 1].counts), 1e-15);
    }
}

TEST(FlatIndex, Examples) {
    EXPECT_EQ(flat_index(1, 1, 4), 1u);
    EXPECT_EQ(flat_index(2, 3, 4), 7u);
    EXPECT_THROW(flat_index(0, 1, 4), RejectedInput);
    EXPECT_THROW(flat_index(1, 5, 4), RejectedInput);
}

TEST(FlatIndex, BijectionExhaustiveUpTo64) {
    for (std::uint32_t n = 1; n <= 64; ++n) {
        std::vector<bool> hit(std::size_t{n} * n + 1, false);
        for (UserId k = 1; k <= n; ++k) {
            for (UserId l = 1; l <= n; ++l) {
                const auto j = flat_index(k, l, n);
                ASSERT_GE(j, 1u);
                ASSERT_LE(j, std::uint64_t{n} * n);
                ASSERT_FALSE(hit[j]);
                hit[j] = true;
                ASSERT_EQ(pair_of(j, n), std::make_pair(k, l));
            }
        }
    }
}

TEST(ComputeUsm, FullBudgetEqualsAllPairsOracle) {
    std::mt19937_64 rng(3);
    const auto v = random_vectors(3, 6, rng);
    const auto m = compute_usm(v, 1000, 1);
    EXPECT_EQ(m.non_null_count(), 9u);
    for (UserId k = 1; k <= 3; ++k) {
        for (UserId l = 1; l <= 3; ++l) {
            ASSERT_TRUE(m.at(k, l).has_value());
            EXPECT_NEAR(*m.at(k, l), oracle_similarity(v[k - 1].counts, v[l - 1].counts), 1e-15);
            EXPECT_EQ(*m.at(k, l), *m.at(l, k));
        }
    }
}

TEST(ComputeUsm, BudgetAccounting) {
    std::mt19937_64 rng(5);
    const auto v = random_vectors(4, 6, rng);
    const auto m = compute_usm(v, 2, 1);
    EXPECT_EQ(m.computed_pairs(), 2u);
    std::size_t off = 0;
    for (const auto& e : m.entries()) {
        const auto [k, l] = pair_of(e.index, 4);
        if (k != l) ++off;
    }
    EXPECT_EQ(off, 4u);
    EXPECT_EQ(compute_usm(v, 0, 1).non_null_count(), 0u);

    const auto big = random_vectors(20, 6, rng);
    for (std::uint64_t b : {0, 1, 7, 50, 189, 190, 500}) {
        EXPECT_EQ(compute_usm(big, b, 1).computed_pairs(), std::min<std::uint64_t>(b, 190));
    }
}

TEST(ComputeUsm, RowMajorTraversal) {
    for (std::uint32_t n : {2u, 5u, 9u}) {
        std::uint64_t rank = 0;
        for (UserId k = 1; k <= n; ++k) {
            for (UserId l = k + 1; l <= n; ++l) EXPECT_EQ(pair_at_rank(rank++, n), std::make_pair(k, l));
        }
    }
}

TEST(UpdateUsm, RecalculationMatchesFreshComputeOnSamePattern) {
    std::mt19937_64 rng(9);
    std::uniform_int_distribution<UserId> user(1, 6);
    std::uniform_int_distribution<int> cls(0, 5);
    std::vector<Transaction> a, b;
    for (std::uint64_t i = 1; i <= 40; ++i) a.push_back(tx(i, user(rng), static_cast<std::uint8_t>(cls(rng))));
    b = a;
    for (std::uint64_t i = 41; i <= 60; ++i) b.push_back(tx(i, user(rng), static_cast<std::uint8_t>(cls(rng))));
    const ClassSet classes;
    const auto old_m = compute_usm(build_user_vectors({{}, a}, 6, classes), 7, 2);

    EXPECT_EQ(update_usm(old_m, {{}, a}, classes), old_m);

    const auto updated = update_usm(old_m, {{}, b}, classes);
    const auto fresh = compute_usm(build_user_vectors({{}, b}, 6, classes), 7, 2);
    EXPECT_EQ(updated, fresh);
}

TEST(UpdateUsm, OneNewTransactionOnlyTouchesItsRowAndColumn) {
    std::vector<Transaction> a{tx(1, 1, 0), tx(2, 2, 1), tx(3, 3, 2), tx(4, 4, 3)};
    const ClassSet classes;
    const auto m = compute_usm(build_user_vectors({{}, a}, 4, classes), 100, 1);
    auto b = a;
    b.push_back(tx(5, 2, 4));
    const auto u = update_usm(m, {{}, b}, classes);
    for (const auto& e : m.entries()) {
        const auto [k, l] = pair_of(e.index, 4);
        if (k != 2 && l != 2) EXPECT_EQ(*u.at_flat(e.index), e.value);
    }
}

TEST(CompressedRows, RoundTripAndBinarySize) {
    std::mt19937_64 rng(2);
    const auto v = random_vectors(10, 6, rng);
    const auto m = compute_usm(v, 12, 1);
    const auto rows = to_compressed_rows(m);
    EXPECT_EQ(CompressedRows::from_bytes(rows.to_bytes()), rows);
    EXPECT_EQ(rows.values.size(), m.non_null_count());

    std::vector<FlatIndex> cells{flat_index(1, 2, 10), flat_index(3, 4, 10), flat_index(10, 1, 10)};
    const auto b = binary_compressed_rows(10, cells);
    EXPECT_EQ(b.row_ptr.size(), 11u);
    EXPECT_EQ(b.cols.size(), 3u);
    EXPECT_EQ(b.byte_size(), b.to_bytes().size());
}
