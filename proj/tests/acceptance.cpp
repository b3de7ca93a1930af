// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include "arcmark/capacity.hpp"
#include "arcmark/decoder.hpp"
#include "arcmark/embedder.hpp"
#include "arcmark/error.hpp"
#include "arcmark/harness.hpp"
#include "arcmark/sources.hpp"

#include "oracles/rank_oracle.hpp"
#include "oracles/stats.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace arcmark;

namespace {

struct Verdict {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail += (detail.empty() ? "" : "; ") + std::string("FAILED ") + what;
        }
    }
    void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

std::string fmt(const char* f, double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, x);
    return buf;
}

int failures = 0;

void criterion(const std::string& name, double limit_seconds, const std::function<Verdict()>& body) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
        v = body();
    } catch (const std::exception& e) {
        v.pass = false;
        v.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs > limit_seconds) {
        v.pass = false;
        v.note("FAILED runtime " + fmt("%.1f", secs) + " s exceeds " + fmt("%.0f", limit_seconds) + " s");
    }
    if (!v.pass) ++failures;
    std::printf("%s  %s  [%.1f s / %.0f s]  %s\n", v.pass ? "PASS" : "FAIL", name.c_str(), secs, limit_seconds,
                v.detail.c_str());
    std::fflush(stdout);
}

Verdict capacity_closed_form_check() {
    Verdict v;
    const double c3 = capacity_closed_form(3);
    v.require(std::fabs(c3 - 2.0 / 3.0) <= 1e-12, "R(3) = 2/3");
    const double lim = capacity_limit();
    v.require(std::fabs(std::round(lim * 1e4) / 1e4 - 0.2787) < 1e-12, "limit rounds to 0.2787");
    v.note("R(3) = " + fmt("%.15f", c3) + ", limit = " + fmt("%.6f", lim));
    return v;
}

Verdict brute_force_check() {
    Verdict v;
    for (std::uint32_t N : {2U, 3U, 4U}) {
        const BruteForceResult r = brute_force_capacity(N, 4);
        const double closed = capacity_closed_form(N);
        const double construction = optimal_construction(N).mutual_information_bits();
        v.require(std::fabs(r.bits - closed) <= 1e-9, "brute force N=" + std::to_string(N));
        v.require(std::fabs(construction - r.bits) <= 1e-9, "construction attains max N=" + std::to_string(N));
        v.require(r.table.is_distortion_free(), "optimal table feasible N=" + std::to_string(N));
        v.note("N=" + std::to_string(N) + " " + fmt("%.12f", r.bits) + " (" + std::to_string(r.tables_examined) +
               " tables)");
    }
    const EncoderTable t3 = optimal_construction(3);
    std::vector<std::uint32_t> w1, w2;
    for (std::size_t c = 0; c < 3; ++c) {
        w1.push_back(t3.cells[0][c] + 1);
        w2.push_back(t3.cells[1][c] + 1);
    }
    v.require(w1 == std::vector<std::uint32_t>{1, 1, 2} && w2 == std::vector<std::uint32_t>{2, 3, 3},
              "three-token table rows (1,1,2) / (2,3,3)");
    return v;
}

Verdict channel_law_check() {
    Verdict v;
    const std::uint32_t N = 16;
    const std::size_t steps = 100000;
    const EmbedConfig cfg = EmbedConfig::theorem2(N, 4, 1, 0);
    SourceSpec spec;
    spec.kind = SourceKind::p2_uniform;
    spec.N = N;
    spec.source_seed = 0x5eed;
    const MasterKey mk = MasterKey::from_seed(0xc4a7, 0);
    auto rng = sampling_rng(0xc4a7);
    std::mt19937_64 symbols(0x51);
    std::vector<std::size_t> hist(N + 1, 0);
    for (std::uint64_t t = 1; t <= steps; ++t) {
        const TokenDistribution q = next_distribution(spec, t);
        const Symbol c = std::uniform_int_distribution<Symbol>(0, N - 1)(symbols);
        const StepSecret s = derive_step(mk, t, N, N);
        const TokenId x = embed_step(q, c, s, cfg, rng).token;
        ++hist[oracle::distance_rank(s.perm[x], (c + s.v) % N, N)];
    }
    const double pairs = N * (N - 1) / 2.0;
    double worst_z = 0.0;
    for (std::uint32_t a = 1; a <= N; ++a) {
        const double pa = (N - a) / pairs;
        const double expected = pa * steps;
        if (pa == 0.0) {
            v.require(hist[a] == 0, "rank " + std::to_string(a) + " never emitted");
            continue;
        }
        const double sigma = std::sqrt(steps * pa * (1.0 - pa));
        const double z = std::fabs(hist[a] - expected) / sigma;
        worst_z = std::max(worst_z, z);
        v.require(z <= 3.0, "rank " + std::to_string(a) + " within 3 sigma (z = " + fmt("%.2f", z) + ")");
    }
    v.note("largest |z| = " + fmt("%.2f", worst_z) + " over 15 ranks");
    return v;
}

Verdict distortion_check() {
    Verdict v;
    std::mt19937_64 rng(0xd157);
    double worst = 0.0, worst_spread = 0.0;
    for (int inst = 0; inst < 100; ++inst) {
        const std::uint32_t N = std::uniform_int_distribution<std::uint32_t>(2, 64)(rng);
        const std::size_t k = std::uniform_int_distribution<std::size_t>(1, 6)(rng);
        const std::uint32_t p = 1U << k;
        const std::uint32_t mult = std::min<std::uint32_t>(1U << std::uniform_int_distribution<int>(0, 2)(rng), 256 / p);
        EmbedConfig cfg = EmbedConfig::message_sized(N, k, 1, 0, mult);
        cfg.circle.phi = std::uniform_real_distribution<double>(0.0, kTwoPi / p)(rng);
        SourceSpec src;
        src.kind = SourceKind::dirichlet;
        src.N = N;
        src.source_seed = rng();
        const TokenDistribution q = next_distribution(src, 1);
        const DistortionReport rep = run_distortion_test(cfg, q, 0, rng());
        worst = std::max(worst, rep.max_analytic_deviation);
        worst_spread = std::max(worst_spread, rep.analytic_spread);
    }
    v.require(worst <= 1e-9, "analytic deviation <= 1e-9");
    v.require(worst_spread <= 1e-9, "deviation spread across symbols <= 1e-9");
    v.note("100 instances: max deviation " + fmt("%.2e", worst) + ", max spread " + fmt("%.2e", worst_spread));

    struct Fixed {
        std::uint32_t N;
        std::size_t k;
        std::uint32_t mult;
    };
    const std::vector<Fixed> fixed{{8, 3, 4}, {16, 3, 4}, {32, 2, 4}, {12, 4, 4}, {24, 3, 2}};
    double worst_tv = 0.0;
    for (std::size_t i = 0; i < fixed.size(); ++i) {
        const EmbedConfig cfg = EmbedConfig::message_sized(fixed[i].N, fixed[i].k, 1, 0, fixed[i].mult);
        SourceSpec src;
        src.kind = SourceKind::dirichlet;
        src.N = fixed[i].N;
        src.source_seed = 1000 + i;
        const TokenDistribution q = next_distribution(src, 1);
        const Symbol c = static_cast<Symbol>(i % cfg.circle.p);
        const DistortionReport rep = run_distortion_test(cfg, q, 100000, 77 + i, {c});
        worst_tv = std::max(worst_tv, rep.max_empirical_tv);
        v.require(rep.max_empirical_tv <= 0.02, "empirical TV <= 0.02 on instance " + std::to_string(i));
    }
    v.note("5 instances x 1e5 samples: max TV " + fmt("%.4f", worst_tv));
    return v;
}

Verdict ml_equivalence_check() {
    Verdict v;
    std::size_t instances = 0, mismatches = 0, failures_agree = 0;
    for (std::uint32_t N = 2; N <= 8; ++N) {
        const CircleParams params{N, N, N, std::numbers::pi / (2.0 * N)};
        const DistanceFn f = DistanceFn::log_ml(N);
        for (std::size_t k = 1; k <= 4; ++k) {
            for (std::size_t n = 1; n <= 6; ++n) {
                const GeneratorMatrix g = make_generator(CodeParams{k, n, N, 1000 * N + 10 * k + n});
                std::vector<std::vector<std::uint32_t>> rows;
                for (std::size_t i = 0; i < k; ++i) rows.emplace_back(g.row(i).begin(), g.row(i).end());
                const MasterKey mk = MasterKey::from_seed(N, 100 * k + n);
                std::vector<StepSecret> secrets;
                std::vector<std::uint32_t> keys;
                for (std::size_t t = 1; t <= n; ++t) {
                    secrets.push_back(derive_step(mk, t, N, N));
                    keys.push_back(secrets.back().v);
                }
                std::vector<TokenId> tokens(n, 0);
                std::vector<std::uint32_t> positions(n, 0);
                std::uint64_t total = 1;
                for (std::size_t t = 0; t < n; ++t) total *= N;
                for (std::uint64_t code = 0; code < total; ++code) {
                    std::uint64_t rest = code;
                    for (std::size_t t = 0; t < n; ++t) {
                        tokens[t] = static_cast<TokenId>(rest % N);
                        rest /= N;
                        positions[t] = secrets[t].perm[tokens[t]];
                    }
                    const std::uint64_t expect = oracle::ml_message(positions, keys, rows, N);
                    ++instances;
                    try {
                        const DecodeResult r = decode_with_secrets(tokens, secrets, g, f, params);
                        if (expect == UINT64_MAX || r.message.value() != expect) ++mismatches;
                    } catch (const DecodeFailure&) {
                        if (expect == UINT64_MAX)
                            ++failures_agree;
                        else
                            ++mismatches;
                    }
                }
            }
        }
    }
    v.require(mismatches == 0, std::to_string(mismatches) + " mismatches");
    v.note(std::to_string(instances) + " token sequences (N 2..8, k 1..4, n 1..6), " + std::to_string(mismatches) +
           " mismatches, " + std::to_string(failures_agree) + " zero-likelihood sequences rejected by both");
    return v;
}

Verdict capacity_sweep_check() {
    Verdict v;
    const std::vector<double> rates{0.25};
    const std::vector<std::size_t> grid{64, 128, 256};
    const auto cells = run_capacity_sweep(16, rates, grid, 500, 20261017, 0);
    for (const auto& c : cells) {
        v.require(!c.skipped, "cell n=" + std::to_string(c.n) + " ran");
        v.require(c.trials == 500, "500 trials at n=" + std::to_string(c.n));
        v.note("n=" + std::to_string(c.n) + " k=" + std::to_string(c.k) + " error " + fmt("%.4f", c.error_rate) +
               " +- " + fmt("%.4f", c.sem));
    }
    for (std::size_t i = 1; i < cells.size(); ++i)
        v.require(oracle::not_above(cells[i].error_rate, cells[i].sem, cells[i - 1].error_rate, cells[i - 1].sem),
                  "error non-increasing from n=" + std::to_string(cells[i - 1].n));
    v.require(cells.back().error_rate < 0.01, "error < 1% at n=256");
    return v;
}

Verdict end_to_end_check() {
    Verdict v;
    for (std::size_t k : {3U, 8U}) {
        ExperimentSpec spec;
        spec.embed = EmbedConfig::message_sized(16, k, 256, 31);
        spec.source.kind = SourceKind::dirichlet;
        spec.source.N = 16;
        spec.source.source_seed = 4242;
        spec.distance = DistanceFn::identity();
        spec.trials = 500;
        spec.n_grid = {16, 32, 64, 128, 256};
        spec.master_seed = 1017;
        spec.threads = 0;
        const ExperimentResult first = run_accuracy_experiment(spec);
        const ExperimentResult second = run_accuracy_experiment(spec);
        const std::string csv1 = results_csv(first.rows, spec.master_seed);
        const std::string csv2 = results_csv(second.rows, spec.master_seed);
        const std::string tag = "k=" + std::to_string(k);
        v.require(csv1 == csv2, tag + " CSV byte-identical across runs");
        v.require(first.excluded == 0, tag + " no excluded trials");
        std::string curve = tag + " accuracy";
        for (std::size_t i = 0; i < first.rows.size(); ++i) {
            const ResultRow& row = first.rows[i];
            v.require(row.bit_accuracy >= row.message_accuracy, tag + " bit >= message at n=" + std::to_string(row.n));
            if (i > 0) {
                const ResultRow& prev = first.rows[i - 1];
                v.require(oracle::not_above(prev.message_accuracy, prev.sem_message, row.message_accuracy,
                                            row.sem_message),
                          tag + " non-decreasing at n=" + std::to_string(row.n));
            }
            curve += " " + std::to_string(row.n) + ":" + fmt("%.3f", row.message_accuracy);
        }
        v.note(curve);
    }
    return v;
}

Verdict r_ablation_check() {
    Verdict v;
    ExperimentSpec spec;
    spec.embed = EmbedConfig::message_sized(16, 6, 64, 7);
    spec.source.kind = SourceKind::dirichlet;
    spec.source.N = 16;
    spec.source.source_seed = 99;
    spec.distance = DistanceFn::identity();
    spec.trials = 500;
    spec.n_grid = {16, 32, 64};
    spec.master_seed = 512;
    spec.threads = 0;
    const std::vector<std::uint32_t> rs{64, 256};
    const auto rows = run_r_ablation(spec, rs);
    const std::size_t m = spec.n_grid.size();
    for (std::size_t i = 0; i < m; ++i) {
        const ResultRow& a = rows[i];
        const ResultRow& b = rows[m + i];
        const double band = 3.0 * std::sqrt(a.sem_message * a.sem_message + b.sem_message * b.sem_message);
        v.require(std::fabs(a.message_accuracy - b.message_accuracy) <= band,
                  "accuracies agree at n=" + std::to_string(a.n));
        v.note("n=" + std::to_string(a.n) + " r=64 " + fmt("%.3f", a.message_accuracy) + " r=256 " +
               fmt("%.3f", b.message_accuracy));
    }
    const double t64 = rows.front().solver_seconds_per_token, t256 = rows.back().solver_seconds_per_token;
    v.require(t256 > t64, "solver time grows with r");
    v.note("solver ms/token r=64 " + fmt("%.3f", 1e3 * t64) + ", r=256 " + fmt("%.3f", 1e3 * t256));
    return v;
}

} // namespace

int main() {
    criterion("capacity closed form and limit", 1.0, capacity_closed_form_check);
    criterion("brute-force capacity for N <= 4", 120.0, brute_force_check);
    criterion("rank channel law, N=16, 1e5 steps", 60.0, channel_law_check);
    criterion("distortion-freeness", 300.0, distortion_check);
    criterion("log-ML decoder equals exact ML", 120.0, ml_equivalence_check);
    criterion("capacity-achievability trend at 0.25 R_cap", 600.0, capacity_sweep_check);
    criterion("end-to-end accuracy curves", 900.0, end_to_end_check);
    criterion("r-ablation", 600.0, r_ablation_check);
    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
