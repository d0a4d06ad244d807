#include "pous/garbled2pc.hpp"

#include <openssl/bn.h>
#include <openssl/ec.h>
#include <openssl/obj_mac.h>
#include <openssl/objects.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <utility>

#include <fmt/format.h>

#include "pous/errors.hpp"

namespace pous::gc {

namespace {

void check_bitwidth(unsigned bitwidth) {
    if (bitwidth < kMinBitwidth || bitwidth > kMaxBitwidth) {
        throw ConfigError(fmt::format("bitwidth {} outside [{}, {}]", bitwidth, kMinBitwidth, kMaxBitwidth));
    }
}

}  // namespace

FixedPoint FixedPoint::encode(double value, unsigned bitwidth) {
    check_bitwidth(bitwidth);
    if (!(value >= 0.0 && value <= 1.0)) {
        throw RejectedInput(fmt::format("fixed-point value {} outside [0, 1]", value));
    }
    const double scaled = std::round(value * static_cast<double>(max_raw(bitwidth)));
    return FixedPoint{static_cast<std::uint32_t>(scaled), bitwidth};
}

double FixedPoint::decode() const { return static_cast<double>(raw) / static_cast<double>(max_raw(bitwidth)); }

bool within_threshold(FixedPoint a, FixedPoint b, FixedPoint theta) {
    if (a.bitwidth != b.bitwidth || a.bitwidth != theta.bitwidth) {
        throw RejectedInput("fixed-point operands use different bitwidths");
    }
    const std::uint32_t diff = a.raw > b.raw ? a.raw - b.raw : b.raw - a.raw;
    return diff <= theta.raw;
}

// ---------------------------------------------------------------------------

namespace {

class LayoutBuilder {
public:
    explicit LayoutBuilder(CircuitLayout& layout) : layout_(layout) {}

    WireId wire() { return layout_.wire_count++; }

    WireId gate(std::uint8_t truth_table, WireId left, WireId right) {
        const WireId out = wire();
        layout_.gates.push_back(Gate{truth_table, left, right, out});
        return out;
    }

    // One step of the borrow chain for x - y - borrow_in.
    WireId borrow(WireId x, WireId y, WireId borrow_in, bool negate = false) {
        const WireId t1 = gate(table::kXnor, x, borrow_in);
        const WireId t2 = gate(table::kXor, y, borrow_in);
        const WireId t3 = gate(table::kAnd, t1, t2);
        return gate(negate ? table::kXnor : table::kXor, borrow_in, t3);
    }

private:
    CircuitLayout& layout_;
};

}  // namespace

CircuitLayout build_comparator(unsigned bitwidth, FixedPoint theta) {
    check_bitwidth(bitwidth);
    if (theta.bitwidth != bitwidth) {
        throw RejectedInput("threshold bitwidth does not match the circuit");
    }
    CircuitLayout layout;
    layout.bitwidth = bitwidth;
    LayoutBuilder b(layout);
    const unsigned w = bitwidth;

    std::vector<WireId> a(w), bb(w);
    for (unsigned i = 0; i < w; ++i) a[i] = b.wire();
    layout.const_zero = b.wire();
    layout.const_one = b.wire();
    for (unsigned i = 0; i < w; ++i) bb[i] = b.wire();
    layout.generator_inputs = a;
    layout.generator_inputs.push_back(layout.const_zero);
    layout.generator_inputs.push_back(layout.const_one);
    layout.evaluator_inputs = bb;

    // sel = [a < b]
    WireId sel = b.gate(table::kAndNotLeft, a[0], bb[0]);
    for (unsigned i = 1; i < w; ++i) sel = b.borrow(a[i], bb[i], sel);

    std::vector<WireId> hi(w), lo(w);
    for (unsigned i = 0; i < w; ++i) {
        const WireId d = b.gate(table::kXor, a[i], bb[i]);
        const WireId e = b.gate(table::kAnd, sel, d);
        hi[i] = b.gate(table::kXor, a[i], e);
        lo[i] = b.gate(table::kXor, bb[i], e);
    }

    // diff = hi - lo, never negative so the top borrow is dropped
    std::vector<WireId> diff(w);
    diff[0] = b.gate(table::kXor, hi[0], lo[0]);
    WireId carry = b.gate(table::kAndNotLeft, hi[0], lo[0]);
    for (unsigned i = 1; i < w; ++i) {
        const WireId x = b.gate(table::kXor, hi[i], lo[i]);
        diff[i] = b.gate(table::kXor, x, carry);
        if (i + 1 < w) carry = b.borrow(hi[i], lo[i], carry);
    }

    // output = ![theta < diff]
    auto theta_bit = [&](unsigned i) { return theta.bit(i) ? layout.const_one : layout.const_zero; };
    WireId out = b.gate(table::kAndNotLeft, theta_bit(0), diff[0]);
    for (unsigned i = 1; i < w; ++i) out = b.borrow(theta_bit(i), diff[i], out, i + 1 == w);
    layout.output = out;
    return layout;
}

std::size_t comparator_gate_count(unsigned bitwidth) { return 18 * std::size_t{bitwidth} - 14; }

bool evaluate_plain(const CircuitLayout& layout, std::uint32_t a, std::uint32_t b) {
    std::vector<bool> value(layout.wire_count, false);
    const unsigned w = layout.bitwidth;
    for (unsigned i = 0; i < w; ++i) {
        value[layout.generator_inputs[i]] = ((a >> i) & 1u) != 0;
        value[layout.evaluator_inputs[i]] = ((b >> i) & 1u) != 0;
    }
    value[layout.const_zero] = false;
    value[layout.const_one] = true;
    for (const auto& g : layout.gates) value[g.out] = apply_table(g.table, value[g.left], value[g.right]);
    return value[layout.output];
}

// ---------------------------------------------------------------------------

WirePair random_wire_pair(crypto::HashDrbg& rng) {
    WirePair pair;
    rng.fill(pair.zero.label);
    do {
        rng.fill(pair.one.label);
    } while (pair.one == pair.zero);
    return pair;
}

namespace {

Ciphertext row_pad(const WireKey& left, const WireKey& right, std::uint64_t gate_index) {
    std::uint8_t input[2 * kLabelBytes + 8];
    std::memcpy(input, left.label.data(), kLabelBytes);
    std::memcpy(input + kLabelBytes, right.label.data(), kLabelBytes);
    for (int i = 0; i < 8; ++i) input[2 * kLabelBytes + i] = static_cast<std::uint8_t>(gate_index >> (8 * i));
    const auto digest = crypto::sha256(std::span<const std::uint8_t>(input, sizeof(input)));
    Ciphertext pad{};
    std::memcpy(pad.data(), digest.data(), kCipherBytes);
    return pad;
}

}  // namespace

GarbledGate gen_gate(std::uint8_t truth_table, const WirePair& left, const WirePair& right, const WirePair& out,
                     std::uint64_t gate_index, crypto::HashDrbg& rng) {
    GarbledGate g;
    g.table = truth_table;
    for (unsigned x = 0; x < 2; ++x) {
        for (unsigned y = 0; y < 2; ++y) {
            Ciphertext row = row_pad(left.of(x != 0), right.of(y != 0), gate_index);
            const WireKey& label = out.of(apply_table(truth_table, x != 0, y != 0));
            for (std::size_t i = 0; i < kLabelBytes; ++i) row[i] ^= label.label[i];
            g.rows[(x << 1) | y] = row;
        }
    }
    for (std::size_t i = g.rows.size() - 1; i > 0; --i) {
        std::swap(g.rows[i], g.rows[rng.uniform(i + 1)]);
    }
    return g;
}

WireKey decrypt_gate(const GarbledGate& gate, const WireKey& left, const WireKey& right, std::uint64_t gate_index) {
    const Ciphertext pad = row_pad(left, right, gate_index);
    WireKey found;
    int valid = 0;
    for (const auto& row : gate.rows) {
        bool tag_ok = true;
        for (std::size_t i = kLabelBytes; i < kCipherBytes; ++i) tag_ok = tag_ok && ((row[i] ^ pad[i]) == 0);
        if (!tag_ok) continue;
        ++valid;
        for (std::size_t i = 0; i < kLabelBytes; ++i) found.label[i] = row[i] ^ pad[i];
    }
    if (valid != 1) {
        throw CorruptedCircuit(fmt::format("gate {}: {} rows decrypt with a valid tag", gate_index, valid));
    }
    return found;
}

// ---------------------------------------------------------------------------

namespace {

class Writer {
public:
    void u8(std::uint8_t v) { out.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void bytes(std::span<const std::uint8_t> b) { out.insert(out.end(), b.begin(), b.end()); }
    void wires(const std::vector<WireId>& ws) {
        u32(static_cast<std::uint32_t>(ws.size()));
        for (auto w : ws) u32(w);
    }
    std::vector<std::uint8_t> out;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> b) : in(b) {}
    std::uint8_t u8() {
        need(1);
        return in[pos++];
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[pos++]) << (8 * i);
        return v;
    }
    void bytes(std::span<std::uint8_t> dst) {
        need(dst.size());
        std::memcpy(dst.data(), in.data() + pos, dst.size());
        pos += dst.size();
    }
    std::vector<WireId> wires() {
        const std::uint32_t count = u32();
        need(std::size_t{count} * 4);
        std::vector<WireId> ws(count);
        for (auto& w : ws) w = u32();
        return ws;
    }
    void need(std::size_t n) const {
        if (pos + n > in.size()) throw RejectedInput("garbled circuit: truncated input");
    }
    std::span<const std::uint8_t> in;
    std::size_t pos = 0;
};

}  // namespace

std::vector<std::uint8_t> GarbledCircuit::serialize() const {
    Writer w;
    w.out.reserve(byte_size());
    w.u32(bitwidth);
    w.u32(wire_count);
    w.wires(generator_inputs);
    w.wires(evaluator_inputs);
    w.u32(output);
    w.u32(static_cast<std::uint32_t>(gates.size()));
    for (const auto& g : gates) {
        w.u8(g.table);
        w.u32(g.left);
        w.u32(g.right);
        w.u32(g.out);
        for (const auto& row : g.rows) w.bytes(row);
    }
    for (const auto& key : output_map) w.bytes(key.label);
    return w.out;
}

GarbledCircuit GarbledCircuit::deserialize(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    GarbledCircuit c;
    c.bitwidth = r.u32();
    c.wire_count = r.u32();
    c.generator_inputs = r.wires();
    c.evaluator_inputs = r.wires();
    c.output = r.u32();
    const std::uint32_t count = r.u32();
    r.need(std::size_t{count} * (13 + 4 * kCipherBytes));
    c.gates.resize(count);
    for (auto& g : c.gates) {
        g.table = r.u8();
        g.left = r.u32();
        g.right = r.u32();
        g.out = r.u32();
        for (auto& row : g.rows) r.bytes(row);
    }
    for (auto& key : c.output_map) r.bytes(key.label);
    if (r.pos != bytes.size()) throw RejectedInput("garbled circuit: trailing bytes");
    auto in_range = [&](WireId id) { return id < c.wire_count; };
    bool ok = in_range(c.output);
    for (const auto& g : c.gates) ok = ok && in_range(g.left) && in_range(g.right) && in_range(g.out);
    for (auto id : c.generator_inputs) ok = ok && in_range(id);
    for (auto id : c.evaluator_inputs) ok = ok && in_range(id);
    if (!ok) throw RejectedInput("garbled circuit: wire id out of range");
    return c;
}

std::size_t GarbledCircuit::byte_size() const {
    return 4 * 6 + 4 * (generator_inputs.size() + evaluator_inputs.size()) + gates.size() * (13 + 4 * kCipherBytes) +
           2 * kLabelBytes;
}

GarbledComparator garble_comparator(unsigned bitwidth, FixedPoint theta, std::uint64_t seed) {
    const CircuitLayout layout = build_comparator(bitwidth, theta);
    crypto::HashDrbg rng(seed, "pous.garble");

    std::vector<WirePair> labels(layout.wire_count);
    for (auto& pair : labels) pair = random_wire_pair(rng);

    GarbledComparator result;
    auto& c = result.circuit;
    c.bitwidth = bitwidth;
    c.wire_count = layout.wire_count;
    c.generator_inputs = layout.generator_inputs;
    c.evaluator_inputs = layout.evaluator_inputs;
    c.output = layout.output;
    c.gates.reserve(layout.gates.size());
    for (std::size_t i = 0; i < layout.gates.size(); ++i) {
        const Gate& g = layout.gates[i];
        GarbledGate gg = gen_gate(g.table, labels[g.left], labels[g.right], labels[g.out], i, rng);
        gg.left = g.left;
        gg.right = g.right;
        gg.out = g.out;
        c.gates.push_back(gg);
    }
    c.output_map = {labels[layout.output].zero, labels[layout.output].one};

    for (auto id : layout.generator_inputs) result.keys.generator.push_back(labels[id]);
    for (auto id : layout.evaluator_inputs) result.keys.evaluator.push_back(labels[id]);
    result.keys.output = labels[layout.output];
    return result;
}

WireKey eval_circuit(const GarbledCircuit& circuit, std::span<const WireKey> k_a, std::span<const WireKey> k_b) {
    if (k_a.size() != circuit.generator_inputs.size() || k_b.size() != circuit.evaluator_inputs.size()) {
        throw RejectedInput(fmt::format("expected {}+{} input labels, got {}+{}", circuit.generator_inputs.size(),
                                        circuit.evaluator_inputs.size(), k_a.size(), k_b.size()));
    }
    std::vector<WireKey> active(circuit.wire_count);
    std::vector<bool> known(circuit.wire_count, false);
    auto load = [&](const std::vector<WireId>& ids, std::span<const WireKey> keys) {
        for (std::size_t i = 0; i < ids.size(); ++i) {
            active[ids[i]] = keys[i];
            known[ids[i]] = true;
        }
    };
    load(circuit.generator_inputs, k_a);
    load(circuit.evaluator_inputs, k_b);
    for (std::size_t i = 0; i < circuit.gates.size(); ++i) {
        const auto& g = circuit.gates[i];
        if (!known[g.left] || !known[g.right]) {
            throw CorruptedCircuit(fmt::format("gate {} reads a wire that has no label yet", i));
        }
        active[g.out] = decrypt_gate(g, active[g.left], active[g.right], i);
        known[g.out] = true;
    }
    if (!known[circuit.output]) throw CorruptedCircuit("output wire never assigned");
    return active[circuit.output];
}

bool decode_output(const GarbledCircuit& circuit, const WireKey& garbled_output) {
    if (garbled_output == circuit.output_map[0]) return false;
    if (garbled_output == circuit.output_map[1]) return true;
    throw CorruptedCircuit("output label matches neither entry of the decoding table");
}

std::vector<std::uint8_t> serialize_key_tables(const InputKeyTables& tables) {
    Writer w;
    auto pairs = [&](const std::vector<WirePair>& ps) {
        w.u32(static_cast<std::uint32_t>(ps.size()));
        for (const auto& p : ps) {
            w.bytes(p.zero.label);
            w.bytes(p.one.label);
        }
    };
    pairs(tables.generator);
    pairs(tables.evaluator);
    w.bytes(tables.output.zero.label);
    w.bytes(tables.output.one.label);
    return w.out;
}

// ---------------------------------------------------------------------------
// Oblivious transfer
// ---------------------------------------------------------------------------

std::size_t OtTranscript::byte_size() const {
    std::size_t total = sender_setup.size();
    for (const auto& m : receiver_choice) total += m.size();
    for (const auto& m : sender_payload) total += m.size();
    return total;
}

namespace {

template <typename T, void (*Free)(T*)>
struct Deleter {
    void operator()(T* p) const { Free(p); }
};
using BnPtr = std::unique_ptr<BIGNUM, Deleter<BIGNUM, BN_clear_free>>;
using PointPtr = std::unique_ptr<EC_POINT, Deleter<EC_POINT, EC_POINT_clear_free>>;

[[noreturn]] void group_failure(const char* what) { throw ProtocolAbort(fmt::format("OT group failure: {}", what)); }

}  // namespace

struct DhObliviousTransfer::Group {
    EC_GROUP* group = nullptr;
    BN_CTX* ctx = nullptr;
    BnPtr order{BN_new()};

    explicit Group(const std::string& curve) {
        int nid = OBJ_sn2nid(curve.c_str());
        if (nid == NID_undef) nid = OBJ_ln2nid(curve.c_str());
        if (nid == NID_undef) nid = EC_curve_nist2nid(curve.c_str());
        if (nid == NID_undef) throw ConfigError(fmt::format("unknown elliptic curve '{}'", curve));
        group = EC_GROUP_new_by_curve_name(nid);
        ctx = BN_CTX_new();
        if (group == nullptr || ctx == nullptr || !order || EC_GROUP_get_order(group, order.get(), ctx) != 1) {
            EC_GROUP_free(group);
            BN_CTX_free(ctx);
            throw ConfigError(fmt::format("cannot instantiate elliptic curve '{}'", curve));
        }
    }
    ~Group() {
        EC_GROUP_free(group);
        BN_CTX_free(ctx);
        group = nullptr;
        ctx = nullptr;
    }
    Group(const Group&) = delete;
    Group& operator=(const Group&) = delete;

    BnPtr scalar(crypto::HashDrbg& rng) const {
        const int len = BN_num_bytes(order.get()) + 8;
        std::vector<std::uint8_t> buf(static_cast<std::size_t>(len));
        BnPtr s(BN_new());
        do {
            rng.fill(buf);
            if (BN_bin2bn(buf.data(), len, s.get()) == nullptr || BN_nnmod(s.get(), s.get(), order.get(), ctx) != 1) {
                group_failure("scalar reduction");
            }
        } while (BN_is_zero(s.get()));
        return s;
    }

    PointPtr point() const {
        PointPtr p(EC_POINT_new(group));
        if (!p) group_failure("point allocation");
        return p;
    }

    // base * scalar when base is null, otherwise scalar * base
    PointPtr mul(const EC_POINT* base, const BIGNUM* s) const {
        PointPtr r = point();
        const int ok = base == nullptr ? EC_POINT_mul(group, r.get(), s, nullptr, nullptr, ctx)
                                       : EC_POINT_mul(group, r.get(), nullptr, base, s, ctx);
        if (ok != 1) group_failure("scalar multiplication");
        return r;
    }

    PointPtr add(const EC_POINT* x, const EC_POINT* y) const {
        PointPtr r = point();
        if (EC_POINT_add(group, r.get(), x, y, ctx) != 1) group_failure("point addition");
        return r;
    }

    PointPtr sub(const EC_POINT* x, const EC_POINT* y) const {
        PointPtr neg = point();
        if (EC_POINT_copy(neg.get(), y) != 1 || EC_POINT_invert(group, neg.get(), ctx) != 1) {
            group_failure("point negation");
        }
        return add(x, neg.get());
    }

    std::vector<std::uint8_t> encode(const EC_POINT* p) const {
        const std::size_t len = EC_POINT_point2oct(group, p, POINT_CONVERSION_COMPRESSED, nullptr, 0, ctx);
        if (len == 0) group_failure("point encoding");
        std::vector<std::uint8_t> out(len);
        EC_POINT_point2oct(group, p, POINT_CONVERSION_COMPRESSED, out.data(), len, ctx);
        return out;
    }

    PointPtr decode(std::span<const std::uint8_t> bytes) const {
        PointPtr p = point();
        if (EC_POINT_oct2point(group, p.get(), bytes.data(), bytes.size(), ctx) != 1 ||
            EC_POINT_is_on_curve(group, p.get(), ctx) != 1 || EC_POINT_is_at_infinity(group, p.get()) == 1) {
            throw ProtocolAbort("OT: received an invalid group element");
        }
        return p;
    }

    WireKey kdf(std::uint64_t index, std::span<const std::uint8_t> a, std::span<const std::uint8_t> b,
                const EC_POINT* shared) const {
        crypto::Sha256 h;
        h.update("pous.ot").update_u64(index).update(a).update(b).update(encode(shared));
        const auto digest = h.finish();
        WireKey key;
        std::memcpy(key.label.data(), digest.data(), kLabelBytes);
        return key;
    }
};

DhObliviousTransfer::DhObliviousTransfer(std::uint64_t seed, std::string curve)
    : group_(std::make_unique<Group>(curve)), rng_(seed, "pous.ot"), curve_(std::move(curve)) {}

DhObliviousTransfer::~DhObliviousTransfer() = default;

std::vector<WireKey> DhObliviousTransfer::transfer(std::span<const WirePair> sender_pairs,
                                                   const std::vector<bool>& choices, OtTranscript* transcript) {
    auto probes = transfer_with_probe(sender_pairs, choices, transcript);
    std::vector<WireKey> out;
    out.reserve(probes.size());
    for (const auto& p : probes) out.push_back(p.chosen);
    return out;
}

std::vector<DhObliviousTransfer::Probe> DhObliviousTransfer::transfer_with_probe(
    std::span<const WirePair> sender_pairs, const std::vector<bool>& choices, OtTranscript* transcript) {
    if (sender_pairs.size() != choices.size()) {
        throw RejectedInput(fmt::format("OT: {} label pairs but {} choice bits", sender_pairs.size(), choices.size()));
    }
    const Group& g = *group_;
    OtTranscript local;
    OtTranscript& t = transcript != nullptr ? *transcript : local;

    // sender setup
    const BnPtr a = g.scalar(rng_);
    const PointPtr big_a = g.mul(nullptr, a.get());
    const auto a_bytes = g.encode(big_a.get());
    t.sender_setup = a_bytes;

    std::vector<Probe> result;
    result.reserve(choices.size());
    for (std::size_t i = 0; i < choices.size(); ++i) {
        // receiver: B = bG, or A + bG for choice 1
        const BnPtr b = g.scalar(rng_);
        PointPtr big_b = g.mul(nullptr, b.get());
        if (choices[i]) big_b = g.add(big_a.get(), big_b.get());
        const auto b_bytes = g.encode(big_b.get());
        t.receiver_choice.push_back(b_bytes);

        // sender: only sees the encoded B
        const PointPtr recv_b = g.decode(b_bytes);
        const PointPtr s0 = g.mul(recv_b.get(), a.get());
        const PointPtr diff = g.sub(recv_b.get(), big_a.get());
        const PointPtr s1 = g.mul(diff.get(), a.get());
        const WireKey k0 = g.kdf(i, a_bytes, b_bytes, s0.get());
        const WireKey k1 = g.kdf(i, a_bytes, b_bytes, s1.get());
        std::vector<std::uint8_t> payload(2 * kLabelBytes);
        for (std::size_t j = 0; j < kLabelBytes; ++j) {
            payload[j] = sender_pairs[i].zero.label[j] ^ k0.label[j];
            payload[kLabelBytes + j] = sender_pairs[i].one.label[j] ^ k1.label[j];
        }
        t.sender_payload.push_back(payload);

        // receiver: k_R = H(bA)
        const PointPtr recv_a = g.decode(a_bytes);
        const PointPtr sr = g.mul(recv_a.get(), b.get());
        const WireKey kr = g.kdf(i, a_bytes, b_bytes, sr.get());
        const std::size_t chosen_off = choices[i] ? kLabelBytes : 0;
        const std::size_t other_off = choices[i] ? 0 : kLabelBytes;
        Probe p;
        for (std::size_t j = 0; j < kLabelBytes; ++j) {
            p.chosen.label[j] = payload[chosen_off + j] ^ kr.label[j];
            p.unchosen_attempt.label[j] = payload[other_off + j] ^ kr.label[j];
        }
        result.push_back(p);
    }
    return result;
}

std::vector<WireKey> DealerObliviousTransfer::transfer(std::span<const WirePair> sender_pairs,
                                                       const std::vector<bool>& choices, OtTranscript* transcript) {
    if (sender_pairs.size() != choices.size()) {
        throw RejectedInput(fmt::format("OT: {} label pairs but {} choice bits", sender_pairs.size(), choices.size()));
    }
    // placeholder sizes mirror the default curve so cost figures stay comparable
    constexpr std::size_t kPointBytes = 33;
    if (transcript != nullptr) transcript->sender_setup.assign(kPointBytes, 0);
    std::vector<WireKey> out;
    out.reserve(choices.size());
    for (std::size_t i = 0; i < choices.size(); ++i) {
        out.push_back(sender_pairs[i].of(choices[i]));
        if (transcript != nullptr) {
            transcript->receiver_choice.emplace_back(kPointBytes, 0);
            transcript->sender_payload.emplace_back(2 * kLabelBytes, 0);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Two-party comparison
// ---------------------------------------------------------------------------

std::size_t GeneratorMessage::byte_size() const { return circuit.byte_size() + 4 + generator_keys.size() * kLabelBytes; }

Generator::Generator(double value, double theta, unsigned bitwidth, std::uint64_t seed) {
    const FixedPoint a = FixedPoint::encode(value, bitwidth);
    const FixedPoint t = FixedPoint::encode(theta, bitwidth);
    GarbledComparator gc = garble_comparator(bitwidth, t, seed);
    tables_ = std::move(gc.keys);
    message_.circuit = std::move(gc.circuit);
    message_.generator_keys.reserve(tables_.generator.size());
    for (unsigned i = 0; i < bitwidth; ++i) message_.generator_keys.push_back(tables_.generator[i].of(a.bit(i)));
    message_.generator_keys.push_back(tables_.generator[bitwidth].zero);     // constant 0
    message_.generator_keys.push_back(tables_.generator[bitwidth + 1].one);  // constant 1
}

bool Generator::decode(const WireKey& garbled_output) const {
    if (garbled_output == tables_.output.zero) return false;
    if (garbled_output == tables_.output.one) return true;
    throw ProtocolAbort("returned output label is not a valid output key");
}

Evaluator::Evaluator(double value, unsigned bitwidth) : value_(FixedPoint::encode(value, bitwidth)) {}

std::vector<bool> Evaluator::choice_bits() const {
    std::vector<bool> bits(value_.bitwidth);
    for (unsigned i = 0; i < value_.bitwidth; ++i) bits[i] = value_.bit(i);
    return bits;
}

WireKey Evaluator::evaluate(const GeneratorMessage& message, std::span<const WireKey> own_keys) const {
    if (message.circuit.bitwidth != value_.bitwidth) {
        throw ProtocolAbort("circuit bitwidth differs from the evaluator's encoding");
    }
    return eval_circuit(message.circuit, message.generator_keys, own_keys);
}

CompareResult secure_compare(double generator_value, double evaluator_value, double theta, unsigned bitwidth,
                             std::uint64_t seed, ObliviousTransfer& ot, OutputMode mode) {
    const Generator gen(generator_value, theta, bitwidth, seed);
    const Evaluator eval(evaluator_value, bitwidth);
    OtTranscript transcript;
    const auto keys = ot.transfer(gen.evaluator_pairs(), eval.choice_bits(), &transcript);
    const WireKey out = eval.evaluate(gen.message(), keys);

    CompareResult r;
    r.within = mode == OutputMode::kPublishedMap ? decode_output(gen.message().circuit, out) : gen.decode(out);
    r.cost.circuit_bytes = gen.message().byte_size();
    r.cost.ot_bytes = transcript.byte_size() + (mode == OutputMode::kDecodeAtGenerator ? kLabelBytes : 0);
    r.cost.gate_count = gen.message().circuit.gates.size();
    return r;
}

}  // namespace pous::gc
