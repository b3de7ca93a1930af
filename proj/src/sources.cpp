#include "arcmark/sources.hpp"

#include "arcmark/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

namespace arcmark {
namespace {

std::mt19937_64 step_rng(std::uint64_t seed, std::uint64_t t) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(t), static_cast<std::uint32_t>(t >> 32)};
    return std::mt19937_64(seq);
}

std::vector<double> truncate_top_k(std::vector<double> p, std::uint32_t top_k) {
    if (top_k == 0 || top_k >= p.size()) return p;
    std::vector<std::size_t> order(p.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });
    for (std::size_t i = top_k; i < order.size(); ++i) p[order[i]] = 0.0;
    return p;
}

TokenDistribution normalised(std::vector<double> p) {
    const double sum = std::accumulate(p.begin(), p.end(), 0.0);
    if (!(sum > 0.0) || !std::isfinite(sum)) throw ParameterError("distribution has no positive mass");
    for (double& x : p) x /= sum;
    return TokenDistribution(std::move(p));
}

TokenDistribution draw_p2(std::uint32_t N, std::mt19937_64& rng) {
    const std::uint64_t pairs = std::uint64_t{N} * (N - 1) / 2;
    std::uint64_t idx = std::uniform_int_distribution<std::uint64_t>(0, pairs - 1)(rng);
    // Unrank in lexicographic order (0,1), (0,2), ..., (N-2, N-1).
    TokenId i = 0;
    while (idx >= N - 1 - i) {
        idx -= N - 1 - i;
        ++i;
    }
    return TokenDistribution::two_point(N, i, static_cast<TokenId>(i + 1 + idx));
}

std::vector<double> draw_dirichlet(std::uint32_t N, double alpha, std::mt19937_64& rng) {
    std::gamma_distribution<double> gamma(alpha, 1.0);
    std::vector<double> g(N);
    double sum = 0.0;
    // Retry on the (astronomically rare) all-zero draw.
    do {
        sum = 0.0;
        for (double& x : g) {
            x = gamma(rng);
            sum += x;
        }
    } while (!(sum > 0.0));
    for (double& x : g) x /= sum;
    return g;
}

class IidSource final : public TokenSource {
public:
    explicit IidSource(SourceSpec spec) : spec_(std::move(spec)) {}
    std::uint32_t vocab_size() const override { return spec_.N; }
    TokenDistribution next(std::uint64_t t, std::span<const TokenId>) override { return next_distribution(spec_, t); }

private:
    SourceSpec spec_;
};

} // namespace

std::string to_string(SourceKind kind) {
    switch (kind) {
    case SourceKind::p2_uniform: return "p2_uniform";
    case SourceKind::dirichlet: return "dirichlet";
    case SourceKind::topk_shaped: return "topk_shaped";
    case SourceKind::replay: return "replay";
    }
    return "unknown";
}

SourceKind source_kind_from_string(const std::string& name) {
    if (name == "p2_uniform") return SourceKind::p2_uniform;
    if (name == "dirichlet") return SourceKind::dirichlet;
    if (name == "topk_shaped") return SourceKind::topk_shaped;
    if (name == "replay") return SourceKind::replay;
    throw ParameterError("unknown source kind: " + name);
}

void SourceSpec::validate() const {
    if (kind == SourceKind::replay) {
        if (replay_path.empty()) throw ParameterError("source: replay requires a path");
        return;
    }
    if (N < 2) throw ParameterError("source: N must be at least 2");
    if (!(alpha > 0.0)) throw ParameterError("source: alpha must be positive");
    if (!(temperature > 0.0)) throw ParameterError("source: temperature must be positive");
    if (top_k > N) throw ParameterError("source: top_k must not exceed N");
}

void to_json(nlohmann::json& j, const SourceSpec& spec) {
    j = nlohmann::json{{"kind", to_string(spec.kind)}, {"N", spec.N},
                       {"alpha", spec.alpha},          {"top_k", spec.top_k},
                       {"temperature", spec.temperature}, {"source_seed", spec.source_seed}};
    if (!spec.replay_path.empty()) j["replay_path"] = spec.replay_path;
}

void from_json(const nlohmann::json& j, SourceSpec& spec) {
    SourceSpec d;
    spec.kind = source_kind_from_string(j.value("kind", to_string(d.kind)));
    spec.N = j.value("N", d.N);
    spec.alpha = j.value("alpha", d.alpha);
    spec.top_k = j.value("top_k", d.top_k);
    spec.temperature = j.value("temperature", d.temperature);
    spec.replay_path = j.value("replay_path", d.replay_path);
    spec.source_seed = j.value("source_seed", d.source_seed);
}

TokenDistribution next_distribution(const SourceSpec& spec, std::uint64_t t) {
    spec.validate();
    auto rng = step_rng(spec.source_seed, t);
    switch (spec.kind) {
    case SourceKind::p2_uniform: return draw_p2(spec.N, rng);
    case SourceKind::dirichlet: return normalised(draw_dirichlet(spec.N, spec.alpha, rng));
    case SourceKind::topk_shaped: {
        const auto g = draw_dirichlet(spec.N, spec.alpha, rng);
        return shape_probs(g, spec.temperature, spec.top_k);
    }
    case SourceKind::replay: break;
    }
    throw ParameterError("next_distribution: replay sources are stateful, use make_source");
}

std::unique_ptr<TokenSource> make_source(const SourceSpec& spec) {
    spec.validate();
    if (spec.kind == SourceKind::replay) return std::make_unique<ReplaySource>(spec.replay_path);
    return std::make_unique<IidSource>(spec);
}

TokenDistribution shape_logits(std::span<const double> logits, double temperature, std::uint32_t top_k) {
    if (logits.empty()) throw ParameterError("shape_logits: empty logits");
    if (!(temperature > 0.0)) throw ParameterError("shape_logits: temperature must be positive");
    double m = -std::numeric_limits<double>::infinity();
    for (double x : logits)
        if (std::isfinite(x)) m = std::max(m, x);
    if (!std::isfinite(m)) throw ParameterError("shape_logits: no finite logits");
    std::vector<double> p(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i)
        p[i] = std::isfinite(logits[i]) ? std::exp((logits[i] - m) / temperature) : 0.0;
    return normalised(truncate_top_k(std::move(p), top_k));
}

TokenDistribution shape_probs(std::span<const double> probs, double temperature, std::uint32_t top_k) {
    if (!(temperature > 0.0)) throw ParameterError("shape_probs: temperature must be positive");
    std::vector<double> p(probs.begin(), probs.end());
    if (temperature != 1.0)
        for (double& x : p) x = x > 0.0 ? std::pow(x, 1.0 / temperature) : 0.0;
    return normalised(truncate_top_k(std::move(p), top_k));
}

ReplayRecord parse_replay_record(const nlohmann::json& j) {
    const auto t = j.at("t").get<std::uint64_t>();
    std::optional<TokenId> token;
    if (j.contains("token_id")) token = j.at("token_id").get<TokenId>();
    if (j.contains("probs")) {
        const auto probs = j.at("probs").get<std::vector<double>>();
        return ReplayRecord{t, TokenDistribution(probs), token};
    }
    if (j.contains("logits")) {
        std::vector<double> logits;
        for (const auto& x : j.at("logits")) logits.push_back(x.is_null() ? -std::numeric_limits<double>::infinity()
                                                                          : x.get<double>());
        const double temperature = j.value("temperature", 1.0);
        const std::uint32_t top_k = j.value("top_k", std::uint32_t{0});
        return ReplayRecord{t, shape_logits(logits, temperature, top_k), token};
    }
    throw ParameterError("replay record needs either probs or logits");
}

nlohmann::json replay_record_json(std::uint64_t t, const TokenDistribution& q, std::optional<TokenId> token_id) {
    nlohmann::json j{{"t", t}, {"probs", std::vector<double>(q.probs().begin(), q.probs().end())}};
    if (token_id) j["token_id"] = *token_id;
    return j;
}

ReplaySource::ReplaySource(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw StreamError("cannot open replay file " + path);
    load(in);
}

ReplaySource::ReplaySource(std::istream& in) { load(in); }

void ReplaySource::load(std::istream& in) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            records_.push_back(parse_replay_record(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw StreamError("replay line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    for (std::size_t i = 1; i < records_.size(); ++i)
        if (records_[i].distribution.size() != records_[0].distribution.size())
            throw StreamError("replay: records disagree on vocabulary size");
}

std::uint32_t ReplaySource::vocab_size() const {
    if (records_.empty()) throw StreamError("replay: no records");
    return records_.front().distribution.size();
}

TokenDistribution ReplaySource::next(std::uint64_t t, std::span<const TokenId>) {
    if (cursor_ >= records_.size())
        throw StreamError("replay exhausted after " + std::to_string(records_.size()) + " records");
    const ReplayRecord& rec = records_[cursor_];
    if (rec.t != t)
        throw StreamError("replay record " + std::to_string(cursor_) + " has t = " + std::to_string(rec.t) +
                          ", expected " + std::to_string(t));
    ++cursor_;
    return rec.distribution;
}

} // namespace arcmark
