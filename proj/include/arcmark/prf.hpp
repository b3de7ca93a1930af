#pragma once

// Keyed counter-based pseudorandom streams.
//
// Algorithm (pinned, little-endian throughout):
//   key derivation : BLAKE2b-256(key = parent key or none,
//                                msg = label || LE64(a) || LE64(b))
//   stream         : ChaCha20 (IETF, 96-bit nonce) keystream,
//                    nonce = LE32(tag) || LE64(index), block counter from 0
//   next_u64       : successive 8-byte little-endian words of the keystream
//   uniform_below  : reject words below (2^64 - m) mod m, return word mod m

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace arcmark {

using Key256 = std::array<std::uint8_t, 32>;

Key256 derive_key(std::string_view label, std::uint64_t a, std::uint64_t b);
Key256 derive_key(const Key256& parent, std::string_view label, std::uint64_t a, std::uint64_t b);

class PrfStream {
public:
    PrfStream(const Key256& key, std::uint32_t tag, std::uint64_t index);

    std::uint64_t next_u64();
    std::uint64_t uniform_below(std::uint64_t bound);
    /// Uniform double in [0, 1) with 53 random bits.
    double uniform01();

    /// Raw keystream bytes, continuing from the current position.
    void fill(std::span<std::uint8_t> out);

private:
    void refill();

    Key256 key_;
    std::array<std::uint8_t, 12> nonce_{};
    std::uint32_t block_ = 0;
    std::array<std::uint8_t, 64> buf_{};
    std::size_t pos_ = 64;
};

/// Fisher-Yates shuffle of the identity on [0, n) driven by `stream`.
/// Index i is swapped with uniform_below(i + 1) for i = n-1 down to 1.
template <class Vec>
void shuffle_identity(Vec& out, std::size_t n, PrfStream& stream) {
    out.resize(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<typename Vec::value_type>(i);
    for (std::size_t i = n; i-- > 1;) {
        const auto j = static_cast<std::size_t>(stream.uniform_below(i + 1));
        std::swap(out[i], out[j]);
    }
}

} // namespace arcmark
