#pragma once

// Core side of the language-model bridge: a newline-delimited JSON protocol
// on stdio, plus offline verification of recorded replay files.
//
// Every message is one JSON object with a "type" field:
//   INIT          {N, p, r, phi, k, code_seed, stream_id, message_bits, [n], [theorem2_mode]}   no reply
//   STEP_REQUEST  {t, logits | probs, temperature, top_k}   -> STEP_REPLY {t, token_id}
//   CLOSE         {n_emitted}                              -> CLOSE {n_emitted}
// Protocol violations produce a single ERROR {message} reply and end the session.

#include "arcmark/embedder.hpp"
#include "arcmark/sideinfo.hpp"
#include "arcmark/sources.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace arcmark {

inline constexpr int kBridgeProtocolVersion = 1;

struct ServeOptions {
    /// Solver, sampling seed and keying; circle and code come from INIT.
    EmbedConfig base;
    std::optional<Key256> key;
    /// When set, every step is appended here as a replay record with its token.
    std::ostream* record = nullptr;
};

struct ServeSummary {
    bool ok = false;
    std::size_t steps = 0;
    std::string error;
};

/// Embedding configuration described by an INIT message, layered over `base`.
EmbedConfig config_from_init(const nlohmann::json& init, const EmbedConfig& base);
Message message_from_init(const nlohmann::json& init);

ServeSummary serve(std::istream& in, std::ostream& out, const ServeOptions& options);

struct VerifyResult {
    bool ok = false;
    std::size_t steps_checked = 0;
    /// 1-based step of the first mismatch; 0 when none.
    std::uint64_t first_divergent_step = 0;
};

/// Re-embeds each record with the same key and config and compares the
/// token against the recorded token_id.  Records without token_id are an error.
VerifyResult verify_replay(const std::vector<ReplayRecord>& records, const MasterKey& mk, const EmbedConfig& cfg,
                           const Message& m);

} // namespace arcmark
