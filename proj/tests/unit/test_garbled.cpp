#include <random>

#include <boost/math/distributions/chi_squared.hpp>
#include <gtest/gtest.h>

#include "pous/errors.hpp"
#include "pous/garbled2pc.hpp"

using namespace pous;
using namespace pous::gc;

namespace {

// Plaintext oracle on raw fixed-point integers.
bool oracle_within(std::uint32_t a, std::uint32_t b, std::uint32_t theta) {
    const std::uint32_t d = a > b ? a - b : b - a;
    return d <= theta;
}

}  // namespace

TEST(FixedPoint, EncodeDecodeError) {
    for (unsigned w : {4u, 8u, 16u, 32u}) {
        for (double s : {0.0, 0.1, 0.3333, 0.5, 0.9, 1.0}) {
            const auto f = FixedPoint::encode(s, w);
            EXPECT_LT(f.raw, FixedPoint::max_raw(w) + 1);
            EXPECT_LE(std::abs(f.decode() - s), std::ldexp(1.0, -static_cast<int>(w)));
        }
    }
    EXPECT_THROW(FixedPoint::encode(1.5, 8), RejectedInput);
}

TEST(Gate, AndGateDecryptsToTruthTable) {
    crypto::HashDrbg rng(1, "test");
    const auto l = random_wire_pair(rng), r = random_wire_pair(rng), o = random_wire_pair(rng);
    const auto g = gen_gate(table::kAnd, l, r, o, 0, rng);
    EXPECT_EQ(decrypt_gate(g, l.one, r.one, 0), o.one);
    EXPECT_EQ(decrypt_gate(g, l.zero, r.one, 0), o.zero);
    EXPECT_EQ(decrypt_gate(g, l.one, r.zero, 0), o.zero);
    EXPECT_EQ(decrypt_gate(g, l.zero, r.zero, 0), o.zero);
}

TEST(Gate, AllTablesAllInputsMatchPlaintext) {
    crypto::HashDrbg rng(2, "test");
    for (std::uint8_t t : {table::kAnd, table::kOr, table::kXor, table::kXnor, table::kAndNotLeft}) {
        const auto l = random_wire_pair(rng), r = random_wire_pair(rng), o = random_wire_pair(rng);
        const auto g = gen_gate(t, l, r, o, 17, rng);
        for (int x = 0; x < 2; ++x) {
            for (int y = 0; y < 2; ++y) {
                EXPECT_EQ(decrypt_gate(g, l.of(x), r.of(y), 17), o.of(apply_table(t, x, y)));
            }
        }
    }
}

TEST(Gate, TamperedRowIsDetected) {
    crypto::HashDrbg rng(3, "test");
    const auto l = random_wire_pair(rng), r = random_wire_pair(rng), o = random_wire_pair(rng);
    auto g = gen_gate(table::kXor, l, r, o, 0, rng);
    for (auto& row : g.rows) row[kLabelBytes] ^= 0x01;  // break every tag
    EXPECT_THROW(decrypt_gate(g, l.one, r.zero, 0), CorruptedCircuit);
}

TEST(Comparator, GateCountClosedForm) {
    for (unsigned w = kMinBitwidth; w <= kMaxBitwidth; ++w) {
        const auto layout = build_comparator(w, FixedPoint::encode(0.4, w));
        EXPECT_EQ(layout.gates.size(), comparator_gate_count(w));
        EXPECT_EQ(comparator_gate_count(w), 18u * w - 14u);
    }
    EXPECT_THROW(garble_comparator(3, FixedPoint::encode(0.4, 3), 1), ConfigError);
    EXPECT_THROW(garble_comparator(33, FixedPoint{0, 33}, 1), ConfigError);
}

TEST(Comparator, PlainTemplateExhaustive8Bit) {
    for (double theta : {0.0, 0.1, 0.4, 1.0}) {
        const auto t = FixedPoint::encode(theta, 8);
        const auto layout = build_comparator(8, t);
        for (std::uint32_t a = 0; a < 256; ++a) {
            for (std::uint32_t b = 0; b < 256; ++b) {
                ASSERT_EQ(evaluate_plain(layout, a, b), oracle_within(a, b, t.raw)) << a << "," << b;
            }
        }
    }
}

TEST(Comparator, KnownValues) {
    const auto t = FixedPoint::encode(0.4, 8);
    const auto layout = build_comparator(8, t);
    EXPECT_FALSE(evaluate_plain(layout, FixedPoint::encode(0.9, 8).raw, FixedPoint::encode(0.3, 8).raw));
    for (std::uint32_t a : {0u, 17u, 255u}) EXPECT_TRUE(evaluate_plain(layout, a, a));
}

TEST(Garbled, DeterministicForFixedSeed) {
    const auto t = FixedPoint::encode(0.4, 16);
    const auto a = garble_comparator(16, t, 99), b = garble_comparator(16, t, 99), c = garble_comparator(16, t, 100);
    EXPECT_EQ(a.circuit.serialize(), b.circuit.serialize());
    EXPECT_NE(a.circuit.serialize(), c.circuit.serialize());
    EXPECT_EQ(GarbledCircuit::deserialize(a.circuit.serialize()).serialize(), a.circuit.serialize());
    EXPECT_EQ(a.circuit.byte_size(), a.circuit.serialize().size());
}

TEST(Garbled, EvaluationMatchesPlaintextOnSample) {
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<std::uint32_t> v(0, 255);
    const auto t = FixedPoint::encode(0.4, 8);
    const auto g = garble_comparator(8, t, 5);
    for (int i = 0; i < 2000; ++i) {
        const std::uint32_t a = v(rng), b = v(rng);
        std::vector<WireKey> ka, kb;
        for (unsigned bit = 0; bit < 8; ++bit) ka.push_back(g.keys.generator[bit].of((a >> bit) & 1));
        ka.push_back(g.keys.generator[8].zero);
        ka.push_back(g.keys.generator[9].one);
        for (unsigned bit = 0; bit < 8; ++bit) kb.push_back(g.keys.evaluator[bit].of((b >> bit) & 1));
        const auto out = eval_circuit(g.circuit, ka, kb);
        ASSERT_EQ(decode_output(g.circuit, out), oracle_within(a, b, t.raw));
    }
}

TEST(Garbled, TamperedCircuitRaises) {
    const auto t = FixedPoint::encode(0.4, 8);
    auto g = garble_comparator(8, t, 6);
    for (auto& row : g.circuit.gates[0].rows) row[0] ^= 0xff;
    Generator gen(0.5, 0.4, 8, 1);
    std::vector<WireKey> ka, kb;
    for (unsigned bit = 0; bit < 8; ++bit) ka.push_back(g.keys.generator[bit].zero);
    ka.push_back(g.keys.generator[8].zero);
    ka.push_back(g.keys.generator[9].one);
    for (unsigned bit = 0; bit < 8; ++bit) kb.push_back(g.keys.evaluator[bit].zero);
    EXPECT_THROW(eval_circuit(g.circuit, ka, kb), CorruptedCircuit);
}

TEST(SecureCompare, Examples) {
    DhObliviousTransfer ot(1);
    EXPECT_TRUE(secure_compare(0.5, 0.5, 0.4, 16, 1, ot).within);
    EXPECT_FALSE(secure_compare(0.9, 0.3, 0.4, 16, 2, ot).within);
    EXPECT_FALSE(secure_compare(0.9, 0.3, 0.4, 16, 2, ot, OutputMode::kDecodeAtGenerator).within);
    EXPECT_TRUE(secure_compare(0.9, 0.6, 0.4, 16, 2, ot, OutputMode::kDecodeAtGenerator).within);
}

TEST(SecureCompare, RandomTriplesAgreeWithPlaintext) {
    DealerObliviousTransfer ot;
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0, 1);
    for (int i = 0; i < 10000; ++i) {
        const double a = u(rng), b = u(rng), theta = u(rng);
        const unsigned w = 12;
        const bool expected = oracle_within(FixedPoint::encode(a, w).raw, FixedPoint::encode(b, w).raw,
                                            FixedPoint::encode(theta, w).raw);
        ASSERT_EQ(secure_compare(a, b, theta, w, static_cast<std::uint64_t>(i), ot).within, expected);
    }
}

TEST(SecureCompare, CostIsReported) {
    DhObliviousTransfer ot(3);
    const auto r = secure_compare(0.2, 0.25, 0.4, 16, 4, ot);
    EXPECT_EQ(r.cost.gate_count, comparator_gate_count(16));
    EXPECT_GT(r.cost.circuit_bytes, r.cost.gate_count * 4 * kCipherBytes);
    // 33-byte setup, then per evaluator bit a 33-byte choice and a 32-byte payload.
    EXPECT_EQ(r.cost.ot_bytes, 33u + 16u * (33u + 32u));
}

TEST(Ot, ReceiverGetsChosenKey) {
    crypto::HashDrbg rng(10, "test");
    for (const char* curve : {"prime256v1", "secp256k1", "secp384r1"}) {
        DhObliviousTransfer ot(5, curve);
        std::vector<WirePair> pairs;
        std::vector<bool> bits;
        for (int i = 0; i < 16; ++i) {
            pairs.push_back(random_wire_pair(rng));
            bits.push_back(i % 3 == 0);
        }
        const auto got = ot.transfer(pairs, bits);
        for (int i = 0; i < 16; ++i) EXPECT_EQ(got[i], pairs[i].of(bits[i]));
    }
    EXPECT_THROW(DhObliviousTransfer(1, "no-such-curve"), ConfigError);
}

TEST(Ot, OtherKeyIsNotRecoverable) {
    crypto::HashDrbg rng(11, "test");
    DhObliviousTransfer ot(6);
    std::vector<WirePair> pairs;
    std::vector<bool> bits;
    for (int i = 0; i < 200; ++i) {
        pairs.push_back(random_wire_pair(rng));
        bits.push_back(i % 2 == 1);
    }
    OtTranscript transcript;
    const auto probes = ot.transfer_with_probe(pairs, bits, &transcript);
    for (int i = 0; i < 200; ++i) {
        EXPECT_EQ(probes[i].chosen, pairs[i].of(bits[i]));
        EXPECT_NE(probes[i].unchosen_attempt, pairs[i].of(!bits[i]));
    }
}

TEST(Ot, DealerHasSameInterfaceAndTranscriptShape) {
    crypto::HashDrbg rng(12, "test");
    DealerObliviousTransfer dealer;
    DhObliviousTransfer dh(7);
    std::vector<WirePair> pairs{random_wire_pair(rng), random_wire_pair(rng)};
    std::vector<bool> bits{true, false};
    OtTranscript a, b;
    EXPECT_EQ(dealer.transfer(pairs, bits, &a), dh.transfer(pairs, bits, &b));
    EXPECT_EQ(a.byte_size(), b.byte_size());
}

TEST(Ot, ChoiceMessageIndependentOfBit) {
    // Chi-square test of independence between the choice bit and the first byte
    // after the point prefix, bucketed by high nibble, plus the prefix parity.
    DhObliviousTransfer ot(13);
    crypto::HashDrbg rng(14, "test");
    std::mt19937_64 coin(15);
    double nibble[2][16] = {};
    double parity[2][2] = {};
    for (int i = 0; i < 2000; ++i) {
        const bool bit = coin() & 1;
        std::vector<WirePair> pairs{random_wire_pair(rng)};
        OtTranscript t;
        ot.transfer(pairs, {bit}, &t);
        const auto& msg = t.receiver_choice.at(0);
        nibble[bit][msg.at(1) >> 4] += 1;
        parity[bit][msg.at(0) & 1] += 1;
    }
    auto p_value = [](auto& table, int cols) {
        double rows[2] = {}, total = 0;
        std::vector<double> colsum(cols, 0);
        for (int r = 0; r < 2; ++r) {
            for (int c = 0; c < cols; ++c) {
                rows[r] += table[r][c];
                colsum[c] += table[r][c];
                total += table[r][c];
            }
        }
        double chi = 0;
        for (int r = 0; r < 2; ++r) {
            for (int c = 0; c < cols; ++c) {
                const double e = rows[r] * colsum[c] / total;
                if (e > 0) chi += (table[r][c] - e) * (table[r][c] - e) / e;
            }
        }
        boost::math::chi_squared dist(cols - 1);
        return 1.0 - boost::math::cdf(dist, chi);
    };
    EXPECT_GT(p_value(nibble, 16), 0.01);
    EXPECT_GT(p_value(parity, 2), 0.01);
}
