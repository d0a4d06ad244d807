#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "pous/crypto.hpp"

namespace pous::gc {

// ---------------------------------------------------------------------------
// Fixed-point similarity encoding
// ---------------------------------------------------------------------------

inline constexpr unsigned kMinBitwidth = 4;
inline constexpr unsigned kMaxBitwidth = 32;
inline constexpr unsigned kDefaultBitwidth = 16;

/// A similarity in [0,1] stored as round(s * (2^bitwidth - 1)).
struct FixedPoint {
    std::uint32_t raw = 0;
    unsigned bitwidth = kDefaultBitwidth;

    static std::uint64_t max_raw(unsigned bitwidth) { return (std::uint64_t{1} << bitwidth) - 1; }
    static FixedPoint encode(double value, unsigned bitwidth);
    double decode() const;
    bool bit(unsigned i) const { return ((raw >> i) & 1u) != 0; }
};

/// The comparator's plaintext predicate, |a - b| <= theta at fixed-point precision.
bool within_threshold(FixedPoint a, FixedPoint b, FixedPoint theta);

// ---------------------------------------------------------------------------
// Plain boolean comparator template
// ---------------------------------------------------------------------------

using WireId = std::uint32_t;

/// Two-input gate truth tables. Bit (x << 1 | y) holds the output for inputs (x, y).
namespace table {
inline constexpr std::uint8_t kAnd = 0b1000;
inline constexpr std::uint8_t kOr = 0b1110;
inline constexpr std::uint8_t kXor = 0b0110;
inline constexpr std::uint8_t kXnor = 0b1001;
inline constexpr std::uint8_t kAndNotLeft = 0b0010;  // !x & y
}  // namespace table

inline bool apply_table(std::uint8_t truth_table, bool x, bool y) {
    return ((truth_table >> ((static_cast<unsigned>(x) << 1) | static_cast<unsigned>(y))) & 1u) != 0;
}

struct Gate {
    std::uint8_t table = 0;
    WireId left = 0;
    WireId right = 0;
    WireId out = 0;
};

/// Topology shared by the plain and the garbled comparator.
/// Generator inputs are the bits of s_a (LSB first) followed by the constant-0 and
/// constant-1 wires; the evaluator inputs are the bits of s_b (LSB first).
struct CircuitLayout {
    unsigned bitwidth = 0;
    std::uint32_t wire_count = 0;
    std::vector<WireId> generator_inputs;
    std::vector<WireId> evaluator_inputs;
    WireId const_zero = 0;
    WireId const_one = 0;
    WireId output = 0;
    std::vector<Gate> gates;  // topological order
};

/// CMP(s_a, s_b) drives two MUX banks (max -> minuend, min -> subtrahend), SUB yields
/// |s_a - s_b|, and a final CMP against the constant theta outputs 1 iff diff <= theta.
CircuitLayout build_comparator(unsigned bitwidth, FixedPoint theta);

/// Closed form for the template: (4w-3) + 4w + (6w-8) + (4w-3) = 18w - 14.
std::size_t comparator_gate_count(unsigned bitwidth);

bool evaluate_plain(const CircuitLayout& layout, std::uint32_t a, std::uint32_t b);

// ---------------------------------------------------------------------------
// Garbling (valid-tag decryption, hash-based symmetric encryption)
// ---------------------------------------------------------------------------

inline constexpr std::size_t kLabelBytes = 16;
inline constexpr std::size_t kTagBytes = 4;
inline constexpr std::size_t kCipherBytes = kLabelBytes + kTagBytes;

struct WireKey {
    std::array<std::uint8_t, kLabelBytes> label{};
    friend bool operator==(const WireKey&, const WireKey&) = default;
};

struct WirePair {
    WireKey zero;
    WireKey one;
    const WireKey& of(bool value) const { return value ? one : zero; }
};

WirePair random_wire_pair(crypto::HashDrbg& rng);

using Ciphertext = std::array<std::uint8_t, kCipherBytes>;

struct GarbledGate {
    std::uint8_t table = 0;
    WireId left = 0;
    WireId right = 0;
    WireId out = 0;
    std::array<Ciphertext, 4> rows{};
};

/// Encrypts the output label for table(x, y) under the input labels (k_left^x, k_right^y)
/// for all four input combinations, then shuffles the rows with a seeded permutation.
GarbledGate gen_gate(std::uint8_t truth_table, const WirePair& left, const WirePair& right,
                     const WirePair& out, std::uint64_t gate_index, crypto::HashDrbg& rng);

/// Tries the four rows and returns the unique label whose tag verifies.
/// Throws CorruptedCircuit when zero or several rows verify.
WireKey decrypt_gate(const GarbledGate& gate, const WireKey& left, const WireKey& right,
                     std::uint64_t gate_index);

struct GarbledCircuit {
    unsigned bitwidth = 0;
    std::uint32_t wire_count = 0;
    std::vector<WireId> generator_inputs;
    std::vector<WireId> evaluator_inputs;
    WireId output = 0;
    std::vector<GarbledGate> gates;
    /// Published output decoding table: label for 0, label for 1.
    std::array<WireKey, 2> output_map{};

    /// Length-prefixed little-endian layout; stable for a fixed seed.
    std::vector<std::uint8_t> serialize() const;
    static GarbledCircuit deserialize(std::span<const std::uint8_t> bytes);
    std::size_t byte_size() const;
};

/// Label tables kept by the generator.
struct InputKeyTables {
    std::vector<WirePair> generator;  // one pair per generator input wire
    std::vector<WirePair> evaluator;  // one pair per evaluator input wire (OT sender input)
    WirePair output;
};

struct GarbledComparator {
    GarbledCircuit circuit;
    InputKeyTables keys;
};

/// Builds and garbles the comparator. Throws ConfigError for bitwidth outside [4, 32].
GarbledComparator garble_comparator(unsigned bitwidth, FixedPoint theta, std::uint64_t seed);

/// Evaluates gates in order from the generator's labels k_a and the evaluator's labels k_b.
WireKey eval_circuit(const GarbledCircuit& circuit, std::span<const WireKey> k_a,
                     std::span<const WireKey> k_b);

/// Maps the garbled output through the published output table.
bool decode_output(const GarbledCircuit& circuit, const WireKey& garbled_output);

std::vector<std::uint8_t> serialize_key_tables(const InputKeyTables& tables);

// ---------------------------------------------------------------------------
// 1-out-of-2 oblivious transfer
// ---------------------------------------------------------------------------

/// Messages exchanged during one batch of transfers, in order.
struct OtTranscript {
    std::vector<std::uint8_t> sender_setup;                   // sender -> receiver
    std::vector<std::vector<std::uint8_t>> receiver_choice;   // receiver -> sender, one per transfer
    std::vector<std::vector<std::uint8_t>> sender_payload;    // sender -> receiver, one per transfer

    std::size_t byte_size() const;
};

class ObliviousTransfer {
public:
    virtual ~ObliviousTransfer() = default;
    /// Receiver obtains sender_pairs[i].of(choices[i]) for each i.
    virtual std::vector<WireKey> transfer(std::span<const WirePair> sender_pairs,
                                          const std::vector<bool>& choices,
                                          OtTranscript* transcript = nullptr) = 0;
    virtual std::string name() const = 0;
};

/// Diffie-Hellman style OT (sender publishes A = aG; receiver answers B = bG or A + bG;
/// sender masks m_0 with H(aB) and m_1 with H(a(B - A))) over an OpenSSL prime-order
/// elliptic-curve group selected by name, e.g. "prime256v1", "secp256k1", "secp384r1".
class DhObliviousTransfer final : public ObliviousTransfer {
public:
    explicit DhObliviousTransfer(std::uint64_t seed, std::string curve = "prime256v1");
    ~DhObliviousTransfer() override;

    std::vector<WireKey> transfer(std::span<const WirePair> sender_pairs,
                                  const std::vector<bool>& choices,
                                  OtTranscript* transcript = nullptr) override;
    std::string name() const override { return "dh:" + curve_; }

    /// Receiver-side attempt to unmask the payload it did not choose; used to check
    /// that the other key is not recoverable. Returns the (garbage) label it obtains.
    struct Probe {
        WireKey chosen;
        WireKey unchosen_attempt;
    };
    std::vector<Probe> transfer_with_probe(std::span<const WirePair> sender_pairs,
                                           const std::vector<bool>& choices,
                                           OtTranscript* transcript);

private:
    struct Group;
    std::unique_ptr<Group> group_;
    crypto::HashDrbg rng_;
    std::string curve_;
};

/// Trusted-dealer stand-in: hands the chosen label over directly. Same interface,
/// used for large simulations; it writes a transcript of constant-size placeholders.
class DealerObliviousTransfer final : public ObliviousTransfer {
public:
    std::vector<WireKey> transfer(std::span<const WirePair> sender_pairs,
                                  const std::vector<bool>& choices,
                                  OtTranscript* transcript = nullptr) override;
    std::string name() const override { return "dealer"; }
};

// ---------------------------------------------------------------------------
// Two-party comparison
// ---------------------------------------------------------------------------

/// Everything the generator hands to an evaluator: the garbled circuit and k_a.
struct GeneratorMessage {
    GarbledCircuit circuit;
    std::vector<WireKey> generator_keys;

    std::size_t byte_size() const;
};

/// Candidate side. Holds its similarity value; only labels leave this object.
class Generator {
public:
    Generator(double value, double theta, unsigned bitwidth, std::uint64_t seed);

    const GeneratorMessage& message() const { return message_; }
    /// Label pairs for the evaluator's input wires (the OT sender's input).
    std::span<const WirePair> evaluator_pairs() const { return tables_.evaluator; }
    /// Decode-at-generator variant: the evaluator returns d-hat and the generator maps it.
    bool decode(const WireKey& garbled_output) const;

private:
    InputKeyTables tables_;
    GeneratorMessage message_;
};

/// Voter side. Never receives the generator's value, only its message.
class Evaluator {
public:
    Evaluator(double value, unsigned bitwidth);

    std::vector<bool> choice_bits() const;
    WireKey evaluate(const GeneratorMessage& message, std::span<const WireKey> own_keys) const;

private:
    FixedPoint value_;
};

enum class OutputMode { kPublishedMap, kDecodeAtGenerator };

struct CompareCost {
    std::size_t circuit_bytes = 0;  // garbled circuit + k_a
    std::size_t ot_bytes = 0;
    std::size_t gate_count = 0;
};

struct CompareResult {
    bool within = false;
    CompareCost cost;
};

/// garble -> OT -> eval -> decode. Returns 1 iff |generator - evaluator| <= theta.
CompareResult secure_compare(double generator_value, double evaluator_value, double theta,
                             unsigned bitwidth, std::uint64_t seed, ObliviousTransfer& ot,
                             OutputMode mode = OutputMode::kPublishedMap);

}  // namespace pous::gc
