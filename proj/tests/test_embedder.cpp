#include "arcmark/embedder.hpp"

#include "arcmark/decoder.hpp"
#include "arcmark/error.hpp"

#include "oracles/stats.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <cmath>

using namespace arcmark;

TEST_CASE("config validation") {
    EmbedConfig cfg = EmbedConfig::message_sized(8, 3, 16, 1);
    CHECK_NOTHROW(cfg.validate());
    CHECK(cfg.circle.p == 8);
    CHECK(cfg.circle.r == 32);

    EmbedConfig bad = cfg;
    bad.code.p = 16;
    CHECK_THROWS_AS(bad.validate(), ParameterError);

    bad = cfg;
    bad.keying = Keying::context_hash;
    bad.context_window = 0;
    CHECK_THROWS_AS(bad.validate(), ParameterError);

    EmbedConfig t2 = EmbedConfig::theorem2(8, 3, 16, 1);
    CHECK_NOTHROW(t2.validate());
    t2.circle.phi = 0.0;
    CHECK_THROWS_AS(t2.validate(), ParameterError);
    CHECK_THROWS_AS(EmbedConfig::theorem2(7, 2, 16, 1).validate(), ParameterError);
}

TEST_CASE("config json round trip") {
    EmbedConfig cfg = EmbedConfig::message_sized(16, 4, 32, 9, 8);
    cfg.keying = Keying::context_hash;
    cfg.context_window = 3;
    cfg.sampling_seed = 77;
    const nlohmann::json j = cfg;
    const EmbedConfig back = j.get<EmbedConfig>();
    CHECK(back.code.k == 4);
    CHECK(back.code.p == 16);
    CHECK(back.circle.r == 128);
    CHECK(back.keying == Keying::context_hash);
    CHECK(back.context_window == 3);
    CHECK(back.sampling_seed == 77);

    const nlohmann::json t2 = EmbedConfig::theorem2(10, 2, 8, 0);
    const EmbedConfig t2back = t2.get<EmbedConfig>();
    CHECK(t2back.theorem2_mode);
    CHECK(t2back.circle.p == 10);
    CHECK(t2back.circle.r == 10);
}

TEST_CASE("point mass always emits its token") {
    const EmbedConfig cfg = EmbedConfig::message_sized(8, 2, 8, 0);
    const TokenDistribution q = TokenDistribution::point_mass(8, 5);
    const MasterKey mk = MasterKey::from_seed(3, 0);
    auto rng = sampling_rng(1);
    for (std::uint64_t t = 1; t <= 200; ++t) {
        const StepSecret s = derive_step(mk, t, cfg.circle.N, cfg.circle.r);
        StepDiagnostics diag;
        plan_for_step(q, t % 4, s, cfg, &diag);
        CHECK(diag.closed_form);
        CHECK(diag.support_size == 1);
        CHECK(embed_step(q, t % 4, s, cfg, rng).token == 5);
    }
}

TEST_CASE("token marginal over fresh secrets equals the model distribution") {
    const std::uint32_t N = 6;
    const EmbedConfig cfg = EmbedConfig::message_sized(N, 2, 8, 0, 4);
    const TokenDistribution q(std::vector<double>{0.4, 0.05, 0.25, 0.1, 0.15, 0.05});
    const MasterKey mk = MasterKey::from_seed(11, 0);
    const std::size_t steps = 20000;
    for (Symbol c = 0; c < cfg.circle.p; ++c) {
        auto rng = sampling_rng(100 + c);
        std::vector<std::size_t> counts(N, 0);
        for (std::uint64_t t = 1; t <= steps; ++t) {
            const StepSecret s = derive_step(mk, t + c * steps, N, cfg.circle.r);
            ++counts[embed_step(q, c, s, cfg, rng).token];
        }
        const double chi = oracle::chi_square_statistic(counts, q.probs());
        CHECK(chi <= oracle::chi_square_quantile(N - 1, 0.999));
    }
}

TEST_CASE("sampled tokens follow the plan's conditional") {
    const EmbedConfig cfg = EmbedConfig::message_sized(5, 2, 8, 0, 2);
    const TokenDistribution q(std::vector<double>{0.3, 0.3, 0.2, 0.1, 0.1});
    const StepSecret s = derive_step(MasterKey::from_seed(5, 5), 1, 5, cfg.circle.r);
    const TransportPlan plan = plan_for_step(q, 2, s, cfg);
    const TokenDistribution cond = conditional(plan, s.v);
    auto rng = sampling_rng(8);
    std::vector<std::size_t> counts(5, 0);
    for (int i = 0; i < 20000; ++i) ++counts[embed_step(q, 2, s, cfg, rng).token];
    const double chi = oracle::chi_square_statistic(counts, cond.probs());
    std::size_t dof = 0;
    for (double x : cond.probs()) dof += x > 0.0;
    if (dof > 1) CHECK(chi <= oracle::chi_square_quantile(dof - 1, 0.999));
    for (std::size_t i = 0; i < 5; ++i)
        if (cond[i] == 0.0) CHECK(counts[i] == 0);
}

TEST_CASE("theorem-2 mode uses the closed form and keeps the true message decodable") {
    const EmbedConfig cfg = EmbedConfig::theorem2(8, 3, 40, 4);
    SourceSpec spec;
    spec.kind = SourceKind::p2_uniform;
    spec.N = 8;
    spec.source_seed = 21;
    const GeneratorMatrix g = make_generator(cfg.code);
    const DistanceFn f = DistanceFn::log_ml(8);
    for (std::uint64_t trial = 0; trial < 20; ++trial) {
        auto source = make_source(spec);
        const MasterKey mk = MasterKey::from_seed(31, trial);
        const Message m = Message::from_value(trial % 8, 3);
        const WatermarkTrace trace = embed_sequence(m, *source, mk, cfg, g);
        const auto secrets = derive_secrets(trace.tokens, mk, cfg);
        CHECK(std::isfinite(score_message(m, trace.tokens, secrets, g, f, cfg.circle)));
        for (double h : trace.per_step_support_entropy) CHECK(h == doctest::Approx(1.0));
    }
    const TokenDistribution pair = TokenDistribution::two_point(8, 1, 6);
    StepDiagnostics diag;
    plan_for_step(pair, 3, derive_step(MasterKey::from_seed(1, 1), 1, 8, 8), cfg, &diag);
    CHECK(diag.closed_form);
    CHECK(diag.solver_iterations == 0);
}

TEST_CASE("embed then decode recovers the message") {
    const EmbedConfig cfg = EmbedConfig::message_sized(16, 3, 96, 2);
    SourceSpec spec;
    spec.kind = SourceKind::dirichlet;
    spec.N = 16;
    spec.alpha = 1.0;
    int correct = 0;
    for (std::uint64_t trial = 0; trial < 8; ++trial) {
        spec.source_seed = trial;
        auto source = make_source(spec);
        const MasterKey mk = MasterKey::from_seed(9, trial);
        const Message m = Message::from_value(trial, 3);
        const WatermarkTrace trace = embed_sequence(m, *source, mk, cfg);
        CHECK(trace.tokens.size() == 96);
        CHECK(trace.codeword.size() == 96);
        const DecodeResult r = decode(trace.tokens, mk, cfg, DistanceFn::identity());
        correct += r.message == m;
    }
    CHECK(correct == 8);
}

TEST_CASE("context keying round trip") {
    EmbedConfig cfg = EmbedConfig::message_sized(16, 2, 64, 5);
    cfg.keying = Keying::context_hash;
    cfg.context_window = 3;
    SourceSpec spec;
    spec.kind = SourceKind::dirichlet;
    spec.N = 16;
    spec.alpha = 1.0;
    spec.source_seed = 4;
    auto source = make_source(spec);
    const MasterKey mk = MasterKey::from_seed(2, 2);
    const Message m = Message::from_value(2, 2);
    const WatermarkTrace trace = embed_sequence(m, *source, mk, cfg);
    CHECK(decode(trace.tokens, mk, cfg, DistanceFn::identity()).message == m);
}

TEST_CASE("embedding is deterministic and prefix-consistent") {
    const EmbedConfig cfg = EmbedConfig::message_sized(8, 3, 30, 6);
    SourceSpec spec;
    spec.kind = SourceKind::dirichlet;
    spec.N = 8;
    spec.source_seed = 12;
    const GeneratorMatrix g = make_generator(cfg.code);
    const MasterKey mk = MasterKey::from_seed(4, 4);
    const Message m = Message::from_value(5, 3);
    auto s1 = make_source(spec), s2 = make_source(spec), s3 = make_source(spec);
    const auto a = embed_sequence(m, *s1, mk, cfg, g);
    const auto b = embed_sequence(m, *s2, mk, cfg, g);
    const auto c = embed_sequence(m, *s3, mk, cfg, g, 12);
    CHECK(a.tokens == b.tokens);
    CHECK(a.z_indices == b.z_indices);
    REQUIRE(c.tokens.size() == 12);
    CHECK(std::equal(c.tokens.begin(), c.tokens.end(), a.tokens.begin()));

    auto s4 = make_source(spec);
    CHECK_THROWS_AS(embed_sequence(m, *s4, mk, cfg, g, 31), ParameterError);
    SourceSpec wrong = spec;
    wrong.N = 9;
    auto s5 = make_source(wrong);
    CHECK_THROWS_AS(embed_sequence(m, *s5, mk, cfg, g), ParameterError);
}

TEST_CASE("trace json round trip carries everything needed to decode") {
    const EmbedConfig cfg = EmbedConfig::message_sized(8, 2, 20, 3);
    SourceSpec spec;
    spec.kind = SourceKind::dirichlet;
    spec.N = 8;
    auto source = make_source(spec);
    const MasterKey mk = MasterKey::from_seed(1, 7);
    const WatermarkTrace trace = embed_sequence(Message::from_value(1, 2), *source, mk, cfg);
    const nlohmann::json j = trace;
    CHECK_FALSE(j.contains("key"));
    CHECK_FALSE(j.contains("master_key"));
    const WatermarkTrace back = j.get<WatermarkTrace>();
    CHECK(back.tokens == trace.tokens);
    CHECK(back.N == 8);
    CHECK(back.k == 2);
    CHECK(back.p == 4);
    CHECK(back.r == 16);
    CHECK(back.code_seed == 3);
    CHECK(back.stream_id == 7);
    CHECK(back.keying == Keying::step_index);

    nlohmann::json broken = j;
    broken["n"] = 3;
    CHECK_THROWS_AS(broken.get<WatermarkTrace>(), ParameterError);
}

TEST_CASE("embed_step rejects out-of-range inputs") {
    const EmbedConfig cfg = EmbedConfig::message_sized(4, 1, 4, 0);
    const TokenDistribution q(std::vector<double>{0.25, 0.25, 0.25, 0.25});
    StepSecret s = derive_step(MasterKey::from_seed(0, 0), 1, 4, cfg.circle.r);
    auto rng = sampling_rng(0);
    CHECK_THROWS_AS(embed_step(q, 2, s, cfg, rng), ParameterError);
    s.v = cfg.circle.r;
    CHECK_THROWS_AS(embed_step(q, 0, s, cfg, rng), ParameterError);
    const TokenDistribution wrong(std::vector<double>{0.5, 0.5});
    CHECK_THROWS_AS(plan_for_step(wrong, 0, derive_step(MasterKey::from_seed(0, 0), 1, 4, 8), cfg), ParameterError);
}
