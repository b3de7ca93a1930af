#include "arcmark/bridge.hpp"

#include "arcmark/error.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <istream>
#include <limits>
#include <ostream>

namespace arcmark {
namespace {

class ProtocolError : public Error {
public:
    using Error::Error;
};

// One watermarked token at step t (1-based).  Shared by the server and the
// offline verifier so both consume the sampling generator identically.
TokenId step_token(const TokenDistribution& q, std::uint64_t t, std::span<const TokenId> history, const Message& m,
                   const MasterKey& mk, const EmbedConfig& cfg, std::mt19937_64& rng) {
    const Symbol symbol = codeword_symbol(m, cfg.code, t - 1);
    const StepSecret secret =
        derive_secret(mk, cfg.keying, cfg.context_window, t, history, cfg.circle.N, cfg.circle.r);
    return embed_step(q, symbol, secret, cfg, rng).token;
}

TokenDistribution request_distribution(const nlohmann::json& req, std::uint32_t N) {
    const double temperature = req.value("temperature", 1.0);
    const std::uint32_t top_k = req.value("top_k", std::uint32_t{0});
    if (req.contains("logits")) {
        std::vector<double> logits;
        for (const auto& x : req.at("logits"))
            logits.push_back(x.is_null() ? -std::numeric_limits<double>::infinity() : x.get<double>());
        if (logits.size() != N)
            throw ProtocolError("STEP_REQUEST has " + std::to_string(logits.size()) + " logits, INIT declared N = " +
                                std::to_string(N));
        return shape_logits(logits, temperature, top_k);
    }
    if (req.contains("probs")) {
        const auto probs = req.at("probs").get<std::vector<double>>();
        if (probs.size() != N)
            throw ProtocolError("STEP_REQUEST has " + std::to_string(probs.size()) + " probs, INIT declared N = " +
                                std::to_string(N));
        if (temperature == 1.0 && (top_k == 0 || top_k >= N)) return TokenDistribution(probs);
        return shape_probs(probs, temperature, top_k);
    }
    throw ProtocolError("STEP_REQUEST needs logits or probs");
}

std::string type_of(const nlohmann::json& msg) {
    if (!msg.is_object() || !msg.contains("type") || !msg.at("type").is_string())
        throw ProtocolError("message without a type field");
    return msg.at("type").get<std::string>();
}

void send(std::ostream& out, const nlohmann::json& msg) {
    out << msg.dump() << '\n';
    out.flush();
}

} // namespace

EmbedConfig config_from_init(const nlohmann::json& init, const EmbedConfig& base) {
    EmbedConfig cfg = base;
    cfg.theorem2_mode = init.value("theorem2_mode", base.theorem2_mode);
    cfg.circle.N = init.at("N").get<std::uint32_t>();
    cfg.circle.p = init.at("p").get<std::uint32_t>();
    cfg.circle.r = init.at("r").get<std::uint32_t>();
    cfg.circle.phi = init.value("phi", 0.0);
    cfg.code.k = init.at("k").get<std::size_t>();
    cfg.code.p = cfg.circle.p;
    cfg.code.code_seed = init.at("code_seed").get<std::uint64_t>();
    cfg.code.n = init.value("n", std::size_t{1} << 20);
    cfg.validate();
    return cfg;
}

Message message_from_init(const nlohmann::json& init) {
    const auto& bits = init.at("message_bits");
    Message m;
    for (const auto& b : bits) {
        const int v = b.get<int>();
        if (v != 0 && v != 1) throw ParameterError("message_bits entries must be 0 or 1");
        m.bits.push_back(static_cast<std::uint8_t>(v));
    }
    return m;
}

ServeSummary serve(std::istream& in, std::ostream& out, const ServeOptions& options) {
    ServeSummary summary;
    std::optional<EmbedConfig> cfg;
    std::optional<MasterKey> mk;
    Message m;
    std::vector<TokenId> history;
    std::mt19937_64 rng;
    bool closed = false;

    std::string line;
    try {
        while (!closed && std::getline(in, line)) {
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            nlohmann::json msg;
            try {
                msg = nlohmann::json::parse(line);
            } catch (const nlohmann::json::parse_error& e) {
                throw ProtocolError(std::string("malformed JSON: ") + e.what());
            }
            const std::string type = type_of(msg);
            if (type == "INIT") {
                if (cfg) throw ProtocolError("duplicate INIT");
                if (!options.key) throw ProtocolError("no master key configured");
                if (msg.contains("version") && msg.at("version").get<int>() != kBridgeProtocolVersion)
                    throw ProtocolError("unsupported protocol version");
                cfg = config_from_init(msg, options.base);
                m = message_from_init(msg);
                if (m.size() != cfg->code.k) throw ProtocolError("message_bits length differs from k");
                mk = MasterKey{*options.key, msg.at("stream_id").get<std::uint64_t>()};
                rng = sampling_rng(cfg->sampling_seed);
            } else if (type == "STEP_REQUEST") {
                if (!cfg) throw ProtocolError("STEP_REQUEST before INIT");
                const auto t = msg.at("t").get<std::uint64_t>();
                if (t != history.size() + 1)
                    throw ProtocolError("expected t = " + std::to_string(history.size() + 1) + ", got " +
                                        std::to_string(t));
                if (t > cfg->code.n) throw ProtocolError("step beyond the declared code length");
                const TokenDistribution q = request_distribution(msg, cfg->circle.N);
                const TokenId token = step_token(q, t, history, m, *mk, *cfg, rng);
                history.push_back(token);
                if (options.record) *options.record << replay_record_json(t, q, token).dump() << '\n';
                send(out, {{"type", "STEP_REPLY"}, {"t", t}, {"token_id", token}});
            } else if (type == "CLOSE") {
                const auto n = msg.value("n_emitted", history.size());
                if (n != history.size())
                    throw ProtocolError("CLOSE reports " + std::to_string(n) + " tokens, core emitted " +
                                        std::to_string(history.size()));
                send(out, {{"type", "CLOSE"}, {"n_emitted", history.size()}});
                closed = true;
            } else {
                throw ProtocolError("unknown message type " + type);
            }
        }
        if (!closed) throw ProtocolError("input ended without CLOSE");
        summary.ok = true;
    } catch (const std::exception& e) {
        summary.error = e.what();
        send(out, {{"type", "ERROR"}, {"message", summary.error}});
    }
    if (options.record) options.record->flush();
    summary.steps = history.size();
    return summary;
}

VerifyResult verify_replay(const std::vector<ReplayRecord>& records, const MasterKey& mk, const EmbedConfig& cfg,
                           const Message& m) {
    cfg.validate();
    if (m.size() != cfg.code.k) throw ParameterError("verify: message length differs from k");
    VerifyResult result;
    std::vector<TokenId> history;
    auto rng = sampling_rng(cfg.sampling_seed);
    for (std::size_t i = 0; i < records.size(); ++i) {
        const ReplayRecord& rec = records[i];
        const std::uint64_t t = i + 1;
        if (rec.t != t) throw StreamError("replay record " + std::to_string(i) + " is out of order");
        if (!rec.token_id) throw StreamError("replay record " + std::to_string(t) + " carries no token_id");
        const TokenId token = step_token(rec.distribution, t, history, m, mk, cfg, rng);
        if (token != *rec.token_id && result.first_divergent_step == 0) result.first_divergent_step = t;
        // The recorded token is what the model actually saw, so it stays the history.
        history.push_back(*rec.token_id);
        ++result.steps_checked;
    }
    result.ok = result.first_divergent_step == 0;
    return result;
}

} // namespace arcmark
