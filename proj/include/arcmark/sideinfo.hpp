#pragma once

// Per-step shared randomness S_t = (V_t, Pi_t), re-derivable by the detector
// from a master key.
//
// Derivation:
//   session = BLAKE2b-256(key = master, "arcmark.session.v1" || LE64(stream_id) || LE64(0))
//   V_t     = uniform_below(r) from the ChaCha20 stream (session, tag 'V', t)
//   Pi_t    = Fisher-Yates shuffle of [0, N) from the stream (session, tag 'P', t)
//
// In context-hash mode the index t is replaced by a 64-bit digest of the
// preceding window of token ids, and different tags are used.

#include "arcmark/circle.hpp"
#include "arcmark/prf.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace arcmark {

struct MasterKey {
    Key256 key{};
    std::uint64_t stream_id = 0;

    /// Parses 64 hex characters. Throws ParameterError otherwise.
    static MasterKey from_hex(std::string_view hex, std::uint64_t stream_id);
    /// Reads the hex key from the named environment variable, if set.
    static std::optional<MasterKey> from_env(const char* var, std::uint64_t stream_id);
    /// Deterministic key for simulations: BLAKE2b of (seed, trial).
    static MasterKey from_seed(std::uint64_t seed, std::uint64_t trial);
};

struct StepSecret {
    std::uint32_t v = 0;
    std::vector<std::uint32_t> perm; ///< perm[token] = circle position
    std::uint64_t t = 0;

    Permutation permutation() const { return perm; }
};

enum class Keying { step_index, context_hash };

StepSecret derive_step(const MasterKey& mk, std::uint64_t t, std::uint32_t N, std::uint32_t r);

/// Context-hash keying: the secret depends on the last `window` tokens of `history`.
StepSecret derive_step_from_context(const MasterKey& mk, std::uint64_t t, std::span<const TokenId> history,
                                    std::size_t window, std::uint32_t N, std::uint32_t r);

/// Dispatches on the keying mode. `history` holds tokens 1..t-1.
StepSecret derive_secret(const MasterKey& mk, Keying keying, std::size_t window, std::uint64_t t,
                         std::span<const TokenId> history, std::uint32_t N, std::uint32_t r);

std::string to_string(Keying keying);
Keying keying_from_string(std::string_view name);

} // namespace arcmark
