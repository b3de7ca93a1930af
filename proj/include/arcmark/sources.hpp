#pragma once

// Token-distribution generators that stand in for a language model.

#include "arcmark/circle.hpp"
#include "arcmark/transport.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace arcmark {

enum class SourceKind { p2_uniform, dirichlet, topk_shaped, replay };

std::string to_string(SourceKind kind);
SourceKind source_kind_from_string(const std::string& name);

struct SourceSpec {
    SourceKind kind = SourceKind::p2_uniform;
    std::uint32_t N = 2;
    double alpha = 0.3;
    std::uint32_t top_k = 0; ///< 0 means no truncation
    double temperature = 1.0;
    std::string replay_path;
    std::uint64_t source_seed = 0;

    void validate() const;
};

void to_json(nlohmann::json& j, const SourceSpec& spec);
void from_json(const nlohmann::json& j, SourceSpec& spec);

class TokenSource {
public:
    virtual ~TokenSource() = default;
    virtual std::uint32_t vocab_size() const = 0;
    /// Distribution of token t (1-based) given tokens 1..t-1.
    virtual TokenDistribution next(std::uint64_t t, std::span<const TokenId> history) = 0;
};

/// Stateless draw for the i.i.d. kinds: identical (spec, t) gives identical output.
TokenDistribution next_distribution(const SourceSpec& spec, std::uint64_t t);

std::unique_ptr<TokenSource> make_source(const SourceSpec& spec);

/// Always returns the same distribution.
class FixedSource final : public TokenSource {
public:
    explicit FixedSource(TokenDistribution q) : q_(std::move(q)) {}
    std::uint32_t vocab_size() const override { return q_.size(); }
    TokenDistribution next(std::uint64_t, std::span<const TokenId>) override { return q_; }

private:
    TokenDistribution q_;
};

/// One line of a replay file.
struct ReplayRecord {
    std::uint64_t t = 0;
    TokenDistribution distribution;
    std::optional<TokenId> token_id; ///< present when the record was captured alongside a watermarked token
};

/// Parses `{t, probs}` or `{t, logits, temperature, top_k}`, plus an optional `token_id`.
ReplayRecord parse_replay_record(const nlohmann::json& j);
nlohmann::json replay_record_json(std::uint64_t t, const TokenDistribution& q, std::optional<TokenId> token_id);

/// Newline-delimited JSON replay stream.  Records are served in file order
/// and each record's t must match the requested step.
class ReplaySource final : public TokenSource {
public:
    explicit ReplaySource(const std::string& path);
    explicit ReplaySource(std::istream& in);

    std::uint32_t vocab_size() const override;
    TokenDistribution next(std::uint64_t t, std::span<const TokenId> history) override;
    const std::vector<ReplayRecord>& records() const { return records_; }

private:
    void load(std::istream& in);
    std::vector<ReplayRecord> records_;
    std::size_t cursor_ = 0;
};

/// Softmax of logits / temperature, then top-k truncation and renormalisation.
/// Entries that are not finite (e.g. masked logits) get zero mass.
TokenDistribution shape_logits(std::span<const double> logits, double temperature, std::uint32_t top_k);
/// q^(1/temperature) renormalised, then top-k truncation.
TokenDistribution shape_probs(std::span<const double> probs, double temperature, std::uint32_t top_k);

} // namespace arcmark
