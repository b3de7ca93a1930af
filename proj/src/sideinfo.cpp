#include "arcmark/sideinfo.hpp"

#include "arcmark/error.hpp"

#include <sodium.h>

#include <algorithm>
#include <cstdlib>

namespace arcmark {
namespace {

constexpr std::uint32_t kTagKey = 0x56;     // 'V'
constexpr std::uint32_t kTagPerm = 0x50;    // 'P'
constexpr std::uint32_t kTagCtxKey = 0x7656; // "Vv"
constexpr std::uint32_t kTagCtxPerm = 0x7050;

int hex_value(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

Key256 session_key(const MasterKey& mk) { return derive_key(mk.key, "arcmark.session.v1", mk.stream_id, 0); }

StepSecret draw(const Key256& session, std::uint32_t key_tag, std::uint32_t perm_tag, std::uint64_t index,
                std::uint64_t t, std::uint32_t N, std::uint32_t r) {
    if (r == 0) throw ParameterError("derive_step: r must be positive");
    if (N == 0) throw ParameterError("derive_step: N must be positive");
    StepSecret s;
    s.t = t;
    PrfStream key_stream(session, key_tag, index);
    s.v = static_cast<std::uint32_t>(key_stream.uniform_below(r));
    PrfStream perm_stream(session, perm_tag, index);
    shuffle_identity(s.perm, N, perm_stream);
    return s;
}

} // namespace

MasterKey MasterKey::from_hex(std::string_view hex, std::uint64_t stream_id) {
    if (hex.size() != 64) throw ParameterError("master key must be 64 hex characters");
    MasterKey mk;
    mk.stream_id = stream_id;
    for (std::size_t i = 0; i < 32; ++i) {
        const int hi = hex_value(hex[2 * i]);
        const int lo = hex_value(hex[2 * i + 1]);
        if (hi < 0 || lo < 0) throw ParameterError("master key contains a non-hex character");
        mk.key[i] = static_cast<std::uint8_t>(hi * 16 + lo);
    }
    return mk;
}

std::optional<MasterKey> MasterKey::from_env(const char* var, std::uint64_t stream_id) {
    const char* value = std::getenv(var);
    if (value == nullptr || *value == '\0') return std::nullopt;
    return from_hex(value, stream_id);
}

MasterKey MasterKey::from_seed(std::uint64_t seed, std::uint64_t trial) {
    MasterKey mk;
    mk.key = derive_key("arcmark.simulation-key.v1", seed, trial);
    mk.stream_id = trial;
    return mk;
}

StepSecret derive_step(const MasterKey& mk, std::uint64_t t, std::uint32_t N, std::uint32_t r) {
    if (t == 0) throw ParameterError("derive_step: steps are numbered from 1");
    return draw(session_key(mk), kTagKey, kTagPerm, t, t, N, r);
}

StepSecret derive_step_from_context(const MasterKey& mk, std::uint64_t t, std::span<const TokenId> history,
                                    std::size_t window, std::uint32_t N, std::uint32_t r) {
    const Key256 session = session_key(mk);
    const std::size_t take = std::min(window, history.size());
    std::vector<std::uint8_t> bytes;
    bytes.reserve(4 * take + 8);
    const std::uint64_t count = take;
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>(count >> (8 * i)));
    for (TokenId tok : history.subspan(history.size() - take))
        for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(tok >> (8 * i)));
    std::uint8_t digest[8];
    crypto_generichash(digest, sizeof digest, bytes.data(), bytes.size(), nullptr, 0);
    std::uint64_t index = 0;
    for (int i = 0; i < 8; ++i) index |= static_cast<std::uint64_t>(digest[i]) << (8 * i);
    return draw(session, kTagCtxKey, kTagCtxPerm, index, t, N, r);
}

StepSecret derive_secret(const MasterKey& mk, Keying keying, std::size_t window, std::uint64_t t,
                         std::span<const TokenId> history, std::uint32_t N, std::uint32_t r) {
    if (keying == Keying::context_hash) return derive_step_from_context(mk, t, history, window, N, r);
    return derive_step(mk, t, N, r);
}

std::string to_string(Keying keying) { return keying == Keying::context_hash ? "context_hash" : "step_index"; }

Keying keying_from_string(std::string_view name) {
    if (name == "step_index") return Keying::step_index;
    if (name == "context_hash") return Keying::context_hash;
    throw ParameterError("unknown keying mode: " + std::string(name));
}

} // namespace arcmark
