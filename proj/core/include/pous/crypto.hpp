#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace pous::crypto {

using Digest = std::array<std::uint8_t, 32>;

/// Streaming SHA-256 backed by OpenSSL's EVP interface.
class Sha256 {
public:
    Sha256();
    ~Sha256();
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    Sha256& update(std::span<const std::uint8_t> bytes);
    Sha256& update(std::string_view text);
    Sha256& update_u64(std::uint64_t value);  // little-endian
    Digest finish();

private:
    void* ctx_;
};

Digest sha256(std::span<const std::uint8_t> bytes);
Digest sha256(std::string_view text);

std::string to_hex(std::span<const std::uint8_t> bytes);

/// Deterministic byte generator: SHA-256 in counter mode over a 256-bit seed.
/// Same seed, same stream; used for wire labels, permutations and OT scalars.
class HashDrbg {
public:
    explicit HashDrbg(std::uint64_t seed, std::string_view domain = "pous.drbg");
    explicit HashDrbg(const Digest& seed);

    void fill(std::span<std::uint8_t> out);
    std::uint64_t next_u64();
    /// Uniform integer in [0, bound) by rejection; bound > 0.
    std::uint64_t uniform(std::uint64_t bound);

private:
    void refill();

    Digest key_{};
    std::uint64_t counter_ = 0;
    Digest block_{};
    std::size_t used_ = sizeof(Digest);
};

/// splitmix64 finalizer, used to derive stable child seeds.
std::uint64_t mix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t parent, std::string_view label, std::uint64_t index = 0);

}  // namespace pous::crypto
