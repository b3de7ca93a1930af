#include "arcmark/sideinfo.hpp"

#include "arcmark/error.hpp"

#include "oracles/stats.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>

using namespace arcmark;

TEST_CASE("step secret golden values") {
    // from tests/oracles/golden_prf.py
    const MasterKey mk = MasterKey::from_seed(42, 3);
    CHECK(mk.stream_id == 3);
    const StepSecret s1 = derive_step(mk, 1, 8, 32);
    CHECK(s1.v == 29);
    CHECK(s1.perm == std::vector<std::uint32_t>{5, 1, 4, 6, 7, 0, 3, 2});
    const StepSecret s2 = derive_step(mk, 2, 8, 32);
    CHECK(s2.v == 12);
    CHECK(s2.perm == std::vector<std::uint32_t>{0, 2, 7, 5, 1, 6, 4, 3});
    const StepSecret s3 = derive_step(mk, 3, 8, 32);
    CHECK(s3.v == 17);
    CHECK(s3.perm == std::vector<std::uint32_t>{1, 5, 6, 0, 2, 4, 7, 3});

    const std::vector<TokenId> history{5, 1, 7};
    const StepSecret ctx = derive_step_from_context(mk, 4, history, 2, 8, 32);
    CHECK(ctx.v == 7);
    CHECK(ctx.perm == std::vector<std::uint32_t>{5, 0, 6, 2, 1, 7, 4, 3});
}

TEST_CASE("derivation is deterministic and step-dependent") {
    const MasterKey mk = MasterKey::from_seed(1, 0);
    const StepSecret a = derive_step(mk, 5, 16, 64), b = derive_step(mk, 5, 16, 64);
    CHECK(a.v == b.v);
    CHECK(a.perm == b.perm);
    CHECK(a.t == 5);
    const StepSecret c = derive_step(mk, 6, 16, 64);
    CHECK((c.v != a.v || c.perm != a.perm));
    CHECK_THROWS_AS(derive_step(mk, 0, 16, 64), ParameterError);
}

TEST_CASE("stream ids separate sessions") {
    MasterKey a = MasterKey::from_seed(1, 0);
    MasterKey b = a;
    b.stream_id = 1;
    int same = 0;
    for (std::uint64_t t = 1; t <= 50; ++t) same += derive_step(a, t, 8, 1024).v == derive_step(b, t, 8, 1024).v;
    CHECK(same < 5);
}

TEST_CASE("singleton vocabulary gives the identity permutation") {
    const StepSecret s = derive_step(MasterKey::from_seed(0, 0), 1, 1, 4);
    CHECK(s.perm == std::vector<std::uint32_t>{0});
}

TEST_CASE("key values are uniform over 10^5 steps") {
    const MasterKey mk = MasterKey::from_seed(77, 0);
    const std::uint32_t r = 12;
    std::vector<std::size_t> counts(r, 0);
    for (std::uint64_t t = 1; t <= 100000; ++t) ++counts[derive_step(mk, t, 2, r).v];
    const std::vector<double> probs(r, 1.0 / r);
    CHECK(oracle::chi_square_statistic(counts, probs) <= oracle::chi_square_quantile(r - 1, 0.99));
}

TEST_CASE("permutation positions are uniform over 10^5 steps") {
    const MasterKey mk = MasterKey::from_seed(78, 0);
    const std::uint32_t N = 16;
    const std::size_t steps = 100000;
    std::vector<std::size_t> counts(N * N, 0);
    for (std::uint64_t t = 1; t <= steps; ++t) {
        const StepSecret s = derive_step(mk, t, N, 1);
        for (std::uint32_t i = 0; i < N; ++i) ++counts[i * N + s.perm[i]];
    }
    const double p = 1.0 / N;
    const double sigma = std::sqrt(steps * p * (1 - p));
    // 256 cells at 3 sigma: allow the handful expected by chance
    int outside = 0;
    for (auto c : counts) outside += !oracle::within_sigma(static_cast<double>(c), steps * p, sigma);
    CHECK(outside <= 4);
    for (auto c : counts) CHECK(oracle::within_sigma(static_cast<double>(c), steps * p, sigma, 4.5));
}

TEST_CASE("detector re-derivation reproduces 10^3 steps") {
    const MasterKey writer = MasterKey::from_seed(9, 2);
    const MasterKey reader = MasterKey::from_hex(
        [&] {
            std::string h;
            static const char* d = "0123456789abcdef";
            for (auto b : writer.key) {
                h += d[b >> 4];
                h += d[b & 15];
            }
            return h;
        }(),
        2);
    for (std::uint64_t t = 1; t <= 1000; ++t) {
        const StepSecret a = derive_step(writer, t, 32, 128), b = derive_step(reader, t, 32, 128);
        REQUIRE(a.v == b.v);
        REQUIRE(a.perm == b.perm);
    }
}

TEST_CASE("context keying depends only on the window") {
    const MasterKey mk = MasterKey::from_seed(4, 0);
    const std::vector<TokenId> h1{9, 9, 1, 2}, h2{3, 3, 1, 2}, h3{9, 9, 2, 1};
    const auto a = derive_step_from_context(mk, 5, h1, 2, 16, 64);
    const auto b = derive_step_from_context(mk, 5, h2, 2, 16, 64);
    const auto c = derive_step_from_context(mk, 5, h3, 2, 16, 64);
    CHECK(a.v == b.v);
    CHECK(a.perm == b.perm);
    CHECK((a.v != c.v || a.perm != c.perm));
    const auto d = derive_secret(mk, Keying::step_index, 2, 5, h1, 16, 64);
    CHECK(d.perm == derive_step(mk, 5, 16, 64).perm);
}

TEST_CASE("master key parsing") {
    const std::string hex(64, 'a');
    const MasterKey mk = MasterKey::from_hex(hex, 5);
    CHECK(mk.key[0] == 0xaa);
    CHECK(mk.stream_id == 5);
    CHECK_THROWS_AS(MasterKey::from_hex("abc", 0), ParameterError);
    CHECK_THROWS_AS(MasterKey::from_hex(std::string(64, 'g'), 0), ParameterError);
    ::setenv("ARCMARK_TEST_KEY", hex.c_str(), 1);
    const auto env = MasterKey::from_env("ARCMARK_TEST_KEY", 1);
    REQUIRE(env.has_value());
    CHECK(env->key == mk.key);
    CHECK_FALSE(MasterKey::from_env("ARCMARK_TEST_KEY_UNSET", 1).has_value());
    CHECK(keying_from_string(to_string(Keying::context_hash)) == Keying::context_hash);
    CHECK_THROWS_AS(keying_from_string("nope"), ParameterError);
}
