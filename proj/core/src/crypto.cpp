#include "pous/crypto.hpp"

#include <openssl/evp.h>

#include <cstring>
#include <stdexcept>

namespace pous::crypto {

namespace {

const EVP_MD* sha256_md() {
    static EVP_MD* md = EVP_MD_fetch(nullptr, "SHA256", nullptr);
    if (md == nullptr) {
        throw std::runtime_error("OpenSSL: SHA256 unavailable");
    }
    return md;
}

}  // namespace

Sha256::Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (ctx_ == nullptr || EVP_DigestInit_ex2(static_cast<EVP_MD_CTX*>(ctx_), sha256_md(), nullptr) != 1) {
        throw std::runtime_error("OpenSSL: digest init failed");
    }
}

Sha256::~Sha256() { EVP_MD_CTX_free(static_cast<EVP_MD_CTX*>(ctx_)); }

Sha256& Sha256::update(std::span<const std::uint8_t> bytes) {
    EVP_DigestUpdate(static_cast<EVP_MD_CTX*>(ctx_), bytes.data(), bytes.size());
    return *this;
}

Sha256& Sha256::update(std::string_view text) {
    EVP_DigestUpdate(static_cast<EVP_MD_CTX*>(ctx_), text.data(), text.size());
    return *this;
}

Sha256& Sha256::update_u64(std::uint64_t value) {
    std::uint8_t buf[8];
    for (int i = 0; i < 8; ++i) {
        buf[i] = static_cast<std::uint8_t>(value >> (8 * i));
    }
    return update(std::span<const std::uint8_t>(buf, 8));
}

Digest Sha256::finish() {
    Digest out{};
    unsigned int len = 0;
    auto* ctx = static_cast<EVP_MD_CTX*>(ctx_);
    EVP_DigestFinal_ex(ctx, out.data(), &len);
    EVP_DigestInit_ex2(ctx, sha256_md(), nullptr);
    return out;
}

Digest sha256(std::span<const std::uint8_t> bytes) {
    Digest out{};
    unsigned int len = 0;
    EVP_Digest(bytes.data(), bytes.size(), out.data(), &len, sha256_md(), nullptr);
    return out;
}

Digest sha256(std::string_view text) {
    return sha256(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (auto b : bytes) {
        out.push_back(kDigits[b >> 4]);
        out.push_back(kDigits[b & 0xf]);
    }
    return out;
}

HashDrbg::HashDrbg(std::uint64_t seed, std::string_view domain) {
    Sha256 h;
    h.update(domain).update_u64(seed);
    key_ = h.finish();
}

HashDrbg::HashDrbg(const Digest& seed) : key_(seed) {}

void HashDrbg::refill() {
    std::uint8_t input[40];
    std::memcpy(input, key_.data(), 32);
    for (int i = 0; i < 8; ++i) {
        input[32 + i] = static_cast<std::uint8_t>(counter_ >> (8 * i));
    }
    ++counter_;
    block_ = sha256(std::span<const std::uint8_t>(input, sizeof(input)));
    used_ = 0;
}

void HashDrbg::fill(std::span<std::uint8_t> out) {
    std::size_t done = 0;
    while (done < out.size()) {
        if (used_ == block_.size()) {
            refill();
        }
        const std::size_t take = std::min(out.size() - done, block_.size() - used_);
        std::memcpy(out.data() + done, block_.data() + used_, take);
        used_ += take;
        done += take;
    }
}

std::uint64_t HashDrbg::next_u64() {
    std::uint8_t buf[8];
    fill(buf);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    }
    return v;
}

std::uint64_t HashDrbg::uniform(std::uint64_t bound) {
    if (bound == 0) {
        throw std::invalid_argument("HashDrbg::uniform: zero bound");
    }
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
    for (;;) {
        const std::uint64_t v = next_u64();
        if (v < limit) {
            return v % bound;
        }
    }
}

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t parent, std::string_view label, std::uint64_t index) {
    // FNV-1a over the label, folded with the parent and index.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : label) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return mix64(mix64(parent ^ h) + index);
}

}  // namespace pous::crypto
