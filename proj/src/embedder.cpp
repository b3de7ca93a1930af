#include "arcmark/embedder.hpp"

#include "arcmark/error.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <string>

namespace arcmark {

void EmbedConfig::validate() const {
    code.validate();
    circle.validate();
    solver.validate();
    if (code.p != circle.p) throw ParameterError("embed: code.p and circle.p differ");
    if (theorem2_mode) {
        const CircleParams expected = CircleParams::theorem2(circle.N);
        if (circle.p != expected.p || circle.r != expected.r || std::fabs(circle.phi - expected.phi) > 1e-12)
            throw ParameterError("embed: theorem-2 mode requires p = r = N and phi = pi/(2N)");
        // With odd N a half-circle holds an unequal number of key angles, so the
        // nearest-token rule cannot give each token of a pair half the mass.
        if (circle.N % 2 != 0) throw ParameterError("embed: theorem-2 mode requires an even vocabulary size");
    }
    if (keying == Keying::context_hash && context_window == 0)
        throw ParameterError("embed: context keying needs a positive window");
}

EmbedConfig EmbedConfig::theorem2(std::uint32_t N, std::size_t k, std::size_t n, std::uint64_t code_seed) {
    EmbedConfig cfg;
    cfg.circle = CircleParams::theorem2(N);
    cfg.code = CodeParams{k, n, N, code_seed};
    cfg.theorem2_mode = true;
    return cfg;
}

EmbedConfig EmbedConfig::message_sized(std::uint32_t N, std::size_t k, std::size_t n, std::uint64_t code_seed,
                                       std::uint32_t r_multiple) {
    EmbedConfig cfg;
    const auto p = static_cast<std::uint32_t>(std::uint64_t{1} << k);
    cfg.code = CodeParams{k, n, p, code_seed};
    cfg.circle = CircleParams{N, p, r_multiple * p, 0.0};
    return cfg;
}

void to_json(nlohmann::json& j, const EmbedConfig& cfg) {
    j = nlohmann::json{{"code", cfg.code},
                       {"circle", {{"N", cfg.circle.N}, {"p", cfg.circle.p}, {"r", cfg.circle.r}, {"phi", cfg.circle.phi}}},
                       {"solver", cfg.solver},
                       {"theorem2_mode", cfg.theorem2_mode},
                       {"sampling_seed", cfg.sampling_seed},
                       {"keying", to_string(cfg.keying)},
                       {"context_window", cfg.context_window}};
}

void from_json(const nlohmann::json& j, EmbedConfig& cfg) {
    EmbedConfig d;
    cfg.theorem2_mode = j.value("theorem2_mode", false);
    const auto& c = j.at("circle");
    cfg.circle.N = c.at("N").get<std::uint32_t>();
    if (cfg.theorem2_mode) {
        cfg.circle = CircleParams::theorem2(cfg.circle.N);
    } else {
        cfg.circle.p = c.at("p").get<std::uint32_t>();
        cfg.circle.r = c.at("r").get<std::uint32_t>();
        cfg.circle.phi = c.value("phi", 0.0);
    }
    const auto& code = j.at("code");
    cfg.code.k = code.at("k").get<std::size_t>();
    cfg.code.n = code.at("n").get<std::size_t>();
    cfg.code.p = code.value("p", cfg.circle.p);
    cfg.code.code_seed = code.value("code_seed", std::uint64_t{0});
    if (j.contains("solver")) cfg.solver = j.at("solver").get<SolverConfig>();
    cfg.sampling_seed = j.value("sampling_seed", d.sampling_seed);
    cfg.keying = keying_from_string(j.value("keying", to_string(d.keying)));
    cfg.context_window = j.value("context_window", d.context_window);
}

TransportPlan plan_for_step(const TokenDistribution& q, Symbol symbol, const StepSecret& secret,
                            const EmbedConfig& cfg, StepDiagnostics* diagnostics) {
    if (q.size() != cfg.circle.N)
        throw ParameterError("embed: distribution over " + std::to_string(q.size()) + " tokens, expected " +
                             std::to_string(cfg.circle.N));
    StepDiagnostics diag;
    diag.support_entropy = q.entropy_bits();
    diag.support_size = q.support().size();

    TransportPlan plan;
    if (q.support().size() == 1) {
        // The marginal constraint forces the lone token for every key.
        plan.vocab_size = q.size();
        plan.rows = 1;
        plan.cols = cfg.circle.r;
        plan.row_tokens = q.support();
        plan.joint.assign(cfg.circle.r, 1.0 / cfg.circle.r);
        diag.closed_form = true;
    } else if (cfg.theorem2_mode && q.is_two_point_uniform()) {
        plan = solve_plan_twopoint(q, symbol, secret.permutation(), cfg.circle);
        diag.closed_form = true;
    } else {
        const CostMatrix cost = build_cost(q, symbol, secret.permutation(), cfg.circle);
        plan = solve_plan(q, cost, cfg.solver);
        diag.solver_iterations = plan.iterations;
    }
    if (diagnostics) *diagnostics = diag;
    return plan;
}

StepOutcome embed_step(const TokenDistribution& q, Symbol symbol, const StepSecret& secret, const EmbedConfig& cfg,
                       std::mt19937_64& rng) {
    if (symbol >= cfg.circle.p) throw ParameterError("embed_step: symbol out of range");
    if (secret.v >= cfg.circle.r) throw ParameterError("embed_step: key out of range");
    StepOutcome out;
    const TransportPlan plan = plan_for_step(q, symbol, secret, cfg, &out.diagnostics);
    const double u = static_cast<double>(rng() >> 11) * 0x1p-53;
    out.token = sample_column(plan, secret.v, u);
    return out;
}

void to_json(nlohmann::json& j, const WatermarkTrace& trace) {
    j = nlohmann::json{{"tokens", trace.tokens},
                       {"n", trace.tokens.size()},
                       {"N", trace.N},
                       {"k", trace.k},
                       {"p", trace.p},
                       {"r", trace.r},
                       {"phi", trace.phi},
                       {"code_seed", trace.code_seed},
                       {"stream_id", trace.stream_id},
                       {"theorem2_mode", trace.theorem2_mode},
                       {"keying", to_string(trace.keying)},
                       {"context_window", trace.context_window}};
}

void from_json(const nlohmann::json& j, WatermarkTrace& trace) {
    trace.tokens = j.at("tokens").get<std::vector<TokenId>>();
    if (j.contains("n") && j.at("n").get<std::size_t>() != trace.tokens.size())
        throw ParameterError("trace: n does not match the token count");
    trace.N = j.at("N").get<std::uint32_t>();
    trace.k = j.at("k").get<std::size_t>();
    trace.p = j.at("p").get<std::uint32_t>();
    trace.r = j.at("r").get<std::uint32_t>();
    trace.phi = j.at("phi").get<double>();
    trace.code_seed = j.at("code_seed").get<std::uint64_t>();
    trace.stream_id = j.at("stream_id").get<std::uint64_t>();
    trace.theorem2_mode = j.value("theorem2_mode", false);
    trace.keying = keying_from_string(j.value("keying", std::string("step_index")));
    trace.context_window = j.value("context_window", std::size_t{4});
}

std::mt19937_64 sampling_rng(std::uint64_t sampling_seed) {
    std::seed_seq seq{static_cast<std::uint32_t>(sampling_seed), static_cast<std::uint32_t>(sampling_seed >> 32),
                      0x73616d70U};
    return std::mt19937_64(seq);
}

WatermarkTrace embed_sequence(const Message& m, TokenSource& source, const MasterKey& mk, const EmbedConfig& cfg,
                              const GeneratorMatrix& g, std::size_t steps) {
    cfg.validate();
    if (g.params().p != cfg.code.p || g.rows() != cfg.code.k)
        throw ParameterError("embed_sequence: generator does not match the code parameters");
    if (steps == 0) steps = cfg.code.n;
    if (steps > g.cols()) throw ParameterError("embed_sequence: more steps than codeword symbols");
    if (source.vocab_size() != cfg.circle.N) throw ParameterError("embed_sequence: source vocabulary differs from N");

    WatermarkTrace trace;
    trace.codeword = encode_prefix(m, g, steps);
    trace.N = cfg.circle.N;
    trace.k = cfg.code.k;
    trace.p = cfg.circle.p;
    trace.r = cfg.circle.r;
    trace.phi = cfg.circle.phi;
    trace.code_seed = cfg.code.code_seed;
    trace.stream_id = mk.stream_id;
    trace.theorem2_mode = cfg.theorem2_mode;
    trace.keying = cfg.keying;
    trace.context_window = cfg.context_window;
    trace.tokens.reserve(steps);
    trace.z_indices.reserve(steps);
    trace.per_step_support_entropy.reserve(steps);

    auto rng = sampling_rng(cfg.sampling_seed);
    using clock = std::chrono::steady_clock;
    for (std::size_t t = 1; t <= steps; ++t) {
        const TokenDistribution q = source.next(t, trace.tokens);
        const StepSecret secret =
            derive_secret(mk, cfg.keying, cfg.context_window, t, trace.tokens, cfg.circle.N, cfg.circle.r);
        const auto start = clock::now();
        const StepOutcome out = embed_step(q, trace.codeword.symbols[t - 1], secret, cfg, rng);
        trace.solver_seconds += std::chrono::duration<double>(clock::now() - start).count();
        trace.tokens.push_back(out.token);
        trace.z_indices.push_back(secret.v);
        trace.per_step_support_entropy.push_back(out.diagnostics.support_entropy);
    }
    return trace;
}

WatermarkTrace embed_sequence(const Message& m, TokenSource& source, const MasterKey& mk, const EmbedConfig& cfg) {
    cfg.validate();
    return embed_sequence(m, source, mk, cfg, make_generator(cfg.code));
}

} // namespace arcmark
