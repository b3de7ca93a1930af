#include "arcmark/prf.hpp"

#include <sodium.h>

#include <cstring>
#include <stdexcept>
#include <vector>

namespace arcmark {
namespace {

void ensure_sodium() {
    static const int rc = sodium_init();
    if (rc < 0) throw std::runtime_error("libsodium initialisation failed");
}

void put_le64(std::uint8_t* out, std::uint64_t x) {
    for (int i = 0; i < 8; ++i) out[i] = static_cast<std::uint8_t>(x >> (8 * i));
}

Key256 blake2b_256(const std::uint8_t* key, std::size_t key_len, std::string_view label, std::uint64_t a,
                   std::uint64_t b) {
    ensure_sodium();
    std::vector<std::uint8_t> msg(label.size() + 16);
    std::memcpy(msg.data(), label.data(), label.size());
    put_le64(msg.data() + label.size(), a);
    put_le64(msg.data() + label.size() + 8, b);
    Key256 out{};
    crypto_generichash(out.data(), out.size(), msg.data(), msg.size(), key, key_len);
    return out;
}

} // namespace

Key256 derive_key(std::string_view label, std::uint64_t a, std::uint64_t b) {
    return blake2b_256(nullptr, 0, label, a, b);
}

Key256 derive_key(const Key256& parent, std::string_view label, std::uint64_t a, std::uint64_t b) {
    return blake2b_256(parent.data(), parent.size(), label, a, b);
}

PrfStream::PrfStream(const Key256& key, std::uint32_t tag, std::uint64_t index) : key_(key) {
    ensure_sodium();
    for (int i = 0; i < 4; ++i) nonce_[i] = static_cast<std::uint8_t>(tag >> (8 * i));
    put_le64(nonce_.data() + 4, index);
}

void PrfStream::refill() {
    static const std::array<std::uint8_t, 64> zeros{};
    crypto_stream_chacha20_ietf_xor_ic(buf_.data(), zeros.data(), buf_.size(), nonce_.data(), block_, key_.data());
    ++block_;
    pos_ = 0;
}

std::uint64_t PrfStream::next_u64() {
    if (pos_ + 8 > buf_.size()) refill();
    std::uint64_t x = 0;
    for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(buf_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return x;
}

std::uint64_t PrfStream::uniform_below(std::uint64_t bound) {
    if (bound == 0) throw std::invalid_argument("uniform_below: bound must be positive");
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
        const std::uint64_t x = next_u64();
        if (x >= threshold) return x % bound;
    }
}

double PrfStream::uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1p-53; }

void PrfStream::fill(std::span<std::uint8_t> out) {
    for (auto& byte : out) {
        if (pos_ >= buf_.size()) refill();
        byte = buf_[pos_++];
    }
}

} // namespace arcmark
