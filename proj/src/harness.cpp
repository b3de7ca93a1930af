#include "arcmark/harness.hpp"

#include "arcmark/capacity.hpp"
#include "arcmark/error.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <thread>

namespace arcmark {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b, std::uint64_t domain) {
    return splitmix64(splitmix64(splitmix64(a) ^ b) ^ domain);
}

constexpr std::uint64_t kDomainMessage = 1;
constexpr std::uint64_t kDomainSampling = 2;
constexpr std::uint64_t kDomainSource = 3;

// Runs fn(i) for i in [0, count) on a small pool.  Callers write results into
// per-index slots, so the reduction order never depends on scheduling.
template <class Fn>
void parallel_for(std::size_t count, unsigned threads, Fn&& fn) {
    if (threads == 0) threads = std::max(1U, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(count, 1)));
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) fn(i);
        });
    for (auto& th : pool) th.join();
}

struct TrialOutcome {
    bool ok = false;
    std::string error;
    std::vector<double> correct;   // per n_grid entry
    std::vector<double> bit_acc;   // per n_grid entry
    std::vector<double> margin;    // per n_grid entry
    double solver_seconds = 0.0;
    std::size_t tokens = 0;
};

double mean(std::span<const double> xs) {
    if (xs.empty()) return 0.0;
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

std::string format_number(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", x);
    return buf;
}

} // namespace

// ---------------------------------------------------------------------------
// Spec

void ExperimentSpec::validate() const {
    embed.validate();
    source.validate();
    if (trials < 1) throw ParameterError("experiment: trials must be at least 1");
    if (n_grid.empty()) throw ParameterError("experiment: n_grid is empty");
    if (!std::is_sorted(n_grid.begin(), n_grid.end())) throw ParameterError("experiment: n_grid must be ascending");
    if (n_grid.back() > embed.code.n) throw ParameterError("experiment: max(n_grid) exceeds the code length");
    if (source.kind != SourceKind::replay && source.N != embed.circle.N)
        throw ParameterError("experiment: source N differs from circle N");
}

void to_json(nlohmann::json& j, const ExperimentSpec& spec) {
    j = nlohmann::json{{"embed", spec.embed},
                       {"source", spec.source},
                       {"distance", to_string(spec.distance.kind)},
                       {"trials", spec.trials},
                       {"n_grid", spec.n_grid},
                       {"seed", spec.master_seed},
                       {"output", spec.output_path},
                       {"threads", spec.threads}};
}

void from_json(const nlohmann::json& j, ExperimentSpec& spec) {
    if (!j.contains("seed")) throw ParameterError("experiment config requires a seed");
    spec.master_seed = j.at("seed").get<std::uint64_t>();
    spec.embed = j.at("embed").get<EmbedConfig>();
    if (j.contains("source")) {
        spec.source = j.at("source").get<SourceSpec>();
    } else {
        spec.source = SourceSpec{};
        spec.source.N = spec.embed.circle.N;
    }
    spec.distance = distance_from_string(j.value("distance", std::string("identity")), spec.embed.circle.N);
    spec.trials = j.value("trials", std::size_t{100});
    if (j.contains("n_grid")) {
        spec.n_grid = j.at("n_grid").get<std::vector<std::size_t>>();
    } else {
        spec.n_grid = {spec.embed.code.n};
    }
    spec.output_path = j.value("output", std::string());
    spec.threads = j.value("threads", 1U);
}

double standard_error(std::span<const double> values) {
    const std::size_t n = values.size();
    if (n < 2) return 0.0;
    const double m = mean(values);
    double ss = 0.0;
    for (double x : values) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(n - 1)) / std::sqrt(static_cast<double>(n));
}

// ---------------------------------------------------------------------------
// Accuracy experiment

ExperimentResult run_accuracy_experiment(const ExperimentSpec& spec) {
    spec.validate();
    const auto start = std::chrono::steady_clock::now();
    const GeneratorMatrix g = make_generator(spec.embed.code);
    const std::size_t k = spec.embed.code.k;
    const std::size_t horizon = spec.n_grid.back();
    const std::size_t cells = spec.n_grid.size();

    std::vector<TrialOutcome> outcomes(spec.trials);
    parallel_for(spec.trials, spec.threads, [&](std::size_t trial) {
        TrialOutcome& out = outcomes[trial];
        try {
            std::mt19937_64 msg_rng(mix(spec.master_seed, trial, kDomainMessage));
            const std::uint64_t value = std::uniform_int_distribution<std::uint64_t>(0, (std::uint64_t{1} << k) - 1)(msg_rng);
            const Message m = Message::from_value(value, k);
            const MasterKey mk = MasterKey::from_seed(spec.master_seed, trial);

            EmbedConfig cfg = spec.embed;
            cfg.sampling_seed = mix(spec.master_seed, trial, kDomainSampling);
            SourceSpec source_spec = spec.source;
            source_spec.source_seed = mix(spec.source.source_seed, trial, kDomainSource);
            auto source = make_source(source_spec);

            std::vector<TokenId> tokens;
            if (horizon > 0) {
                const WatermarkTrace trace = embed_sequence(m, *source, mk, cfg, g, horizon);
                tokens = trace.tokens;
                out.solver_seconds = trace.solver_seconds;
                out.tokens = tokens.size();
            }
            const auto secrets = derive_secrets(tokens, mk, cfg);
            for (std::size_t c = 0; c < cells; ++c) {
                const std::size_t n = spec.n_grid[c];
                const std::span<const TokenId> prefix(tokens.data(), n);
                const std::span<const StepSecret> prefix_secrets(secrets.data(), n);
                const DecodeResult res = decode_with_secrets(prefix, prefix_secrets, g, spec.distance, cfg.circle);
                out.correct.push_back(res.message == m ? 1.0 : 0.0);
                out.bit_acc.push_back(bit_accuracy(m, res.message));
                out.margin.push_back(res.margin);
            }
            out.ok = true;
        } catch (const std::exception& e) {
            out.ok = false;
            out.error = "trial " + std::to_string(trial) + ": " + e.what();
        }
    });

    ExperimentResult result;
    double solver_seconds = 0.0;
    std::size_t solver_tokens = 0;
    for (const auto& o : outcomes) {
        if (!o.ok) {
            ++result.excluded;
            result.failures.push_back(o.error);
            continue;
        }
        solver_seconds += o.solver_seconds;
        solver_tokens += o.tokens;
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    for (std::size_t c = 0; c < cells; ++c) {
        std::vector<double> correct, bits, margins;
        for (const auto& o : outcomes) {
            if (!o.ok) continue;
            correct.push_back(o.correct[c]);
            bits.push_back(o.bit_acc[c]);
            if (std::isfinite(o.margin[c])) margins.push_back(o.margin[c]);
        }
        ResultRow row;
        row.n = spec.n_grid[c];
        row.k = k;
        row.p = spec.embed.circle.p;
        row.r = spec.embed.circle.r;
        row.message_accuracy = mean(correct);
        row.bit_accuracy = mean(bits);
        row.sem_message = standard_error(correct);
        row.sem_bit = standard_error(bits);
        row.mean_margin = mean(margins);
        row.wall_time = wall;
        row.solver_seconds_per_token = solver_tokens ? solver_seconds / static_cast<double>(solver_tokens) : 0.0;
        row.trials = correct.size();
        result.rows.push_back(row);
    }
    return result;
}

std::string results_csv(std::span<const ResultRow> rows, std::uint64_t seed) {
    std::string out = std::string(kCsvHeader) + "\n";
    for (const auto& row : rows) {
        const auto line = [&](const char* metric, double value, double sem) {
            out += std::to_string(row.n) + "," + std::to_string(row.k) + "," + std::to_string(row.p) + "," +
                   std::to_string(row.r) + "," + metric + "," + format_number(value) + "," + format_number(sem) +
                   "," + std::to_string(row.trials) + "," + std::to_string(seed) + "," +
                   std::to_string(kCsvSchemaVersion) + "\n";
        };
        line("message_accuracy", row.message_accuracy, row.sem_message);
        line("bit_accuracy", row.bit_accuracy, row.sem_bit);
        line("mean_margin", row.mean_margin, 0.0);
    }
    return out;
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ParameterError("cannot write " + path);
    f << text;
}

// ---------------------------------------------------------------------------
// Distortion test

void to_json(nlohmann::json& j, const DistortionReport& report) {
    nlohmann::json per = nlohmann::json::array();
    for (const auto& s : report.per_symbol)
        per.push_back({{"symbol", s.symbol},
                       {"analytic_max_deviation", s.analytic_max_deviation},
                       {"empirical_tv", s.empirical_tv},
                       {"chi_square", s.chi_square},
                       {"dof", s.dof},
                       {"p_value", s.p_value}});
    j = nlohmann::json{{"samples", report.samples},
                       {"max_analytic_deviation", report.max_analytic_deviation},
                       {"max_empirical_tv", report.max_empirical_tv},
                       {"analytic_spread", report.analytic_spread},
                       {"per_symbol", per}};
}

DistortionReport run_distortion_test(const EmbedConfig& cfg, const TokenDistribution& q, std::size_t samples,
                                     std::uint64_t seed, std::vector<Symbol> symbols) {
    cfg.validate();
    if (q.size() != cfg.circle.N) throw ParameterError("distortion test: distribution size differs from N");
    if (symbols.empty())
        for (Symbol c = 0; c < cfg.circle.p; ++c) symbols.push_back(c);

    const MasterKey mk = MasterKey::from_seed(seed, 0);
    const StepSecret fixed = derive_step(mk, 1, cfg.circle.N, cfg.circle.r);

    DistortionReport report;
    report.samples = samples;
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    for (Symbol c : symbols) {
        DistortionSymbolReport rep;
        rep.symbol = c;

        const TransportPlan plan = plan_for_step(q, c, fixed, cfg);
        const auto mixture = mixture_over_keys(plan);
        for (std::uint32_t x = 0; x < q.size(); ++x)
            rep.analytic_max_deviation = std::max(rep.analytic_max_deviation, std::fabs(mixture[x] - q[x]));

        if (samples > 0) {
            const MasterKey draw_key = MasterKey::from_seed(seed, 1 + c);
            auto rng = sampling_rng(mix(seed, c, kDomainSampling));
            std::vector<std::size_t> counts(q.size(), 0);
            for (std::size_t s = 1; s <= samples; ++s) {
                const StepSecret secret = derive_step(draw_key, s, cfg.circle.N, cfg.circle.r);
                ++counts[embed_step(q, c, secret, cfg, rng).token];
            }
            double tv = 0.0;
            for (std::uint32_t x = 0; x < q.size(); ++x)
                tv += std::fabs(static_cast<double>(counts[x]) / static_cast<double>(samples) - q[x]);
            rep.empirical_tv = 0.5 * tv;

            // Tokens outside the support can never be drawn; they are counted
            // in the TV but carry no chi-square cell.
            double chi = 0.0;
            for (TokenId x : q.support()) {
                const double expected = q[x] * static_cast<double>(samples);
                chi += (static_cast<double>(counts[x]) - expected) * (static_cast<double>(counts[x]) - expected) /
                       expected;
            }
            rep.chi_square = chi;
            rep.dof = q.support().size() - 1;
            if (rep.dof > 0) {
                boost::math::chi_squared dist(static_cast<double>(rep.dof));
                rep.p_value = boost::math::cdf(boost::math::complement(dist, chi));
            }
        }
        lo = std::min(lo, rep.analytic_max_deviation);
        hi = std::max(hi, rep.analytic_max_deviation);
        report.max_analytic_deviation = std::max(report.max_analytic_deviation, rep.analytic_max_deviation);
        report.max_empirical_tv = std::max(report.max_empirical_tv, rep.empirical_tv);
        report.per_symbol.push_back(rep);
    }
    report.analytic_spread = hi - lo;
    return report;
}

// ---------------------------------------------------------------------------
// Ablation and sweep

std::vector<ResultRow> run_r_ablation(const ExperimentSpec& spec, std::span<const std::uint32_t> r_values) {
    std::vector<ResultRow> rows;
    for (std::uint32_t r : r_values) {
        ExperimentSpec s = spec;
        s.embed.circle.r = r;
        const auto result = run_accuracy_experiment(s);
        rows.insert(rows.end(), result.rows.begin(), result.rows.end());
    }
    return rows;
}

std::vector<SweepCell> run_capacity_sweep(std::uint32_t N, std::span<const double> rates,
                                          std::span<const std::size_t> n_grid, std::size_t trials,
                                          std::uint64_t seed, unsigned threads) {
    const double rcap = capacity_closed_form(N);
    std::vector<SweepCell> cells;
    for (double rho : rates) {
        for (std::size_t n : n_grid) {
            SweepCell cell;
            cell.rho = rho;
            cell.n = n;
            cell.k = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(rho * rcap * static_cast<double>(n))));
            if (cell.k > kMaxMessageBits) {
                cell.skipped = true;
                cells.push_back(cell);
                continue;
            }
            ExperimentSpec spec;
            spec.embed = EmbedConfig::theorem2(N, cell.k, std::max<std::size_t>(n, 1), seed);
            spec.source.kind = SourceKind::p2_uniform;
            spec.source.N = N;
            spec.source.source_seed = seed;
            spec.distance = DistanceFn::log_ml(N);
            spec.trials = trials;
            spec.n_grid = {n};
            spec.master_seed = mix(seed, n, static_cast<std::uint64_t>(std::llround(rho * 1e6)));
            spec.threads = threads;
            const auto result = run_accuracy_experiment(spec);
            const ResultRow& row = result.rows.front();
            cell.error_rate = 1.0 - row.message_accuracy;
            cell.sem = row.sem_message;
            cell.trials = row.trials;
            cells.push_back(cell);
        }
    }
    return cells;
}

std::string sweep_csv(std::span<const SweepCell> cells, std::uint32_t N, std::uint64_t seed) {
    std::string out = std::string(kCsvHeader) + "\n";
    for (const auto& c : cells) {
        char metric[64];
        std::snprintf(metric, sizeof metric, "message_error_rate_rho%g", c.rho);
        out += std::to_string(c.n) + "," + std::to_string(c.k) + "," + std::to_string(N) + "," + std::to_string(N) +
               "," + metric + "," + (c.skipped ? std::string("skipped") : format_number(c.error_rate)) + "," +
               format_number(c.sem) + "," + std::to_string(c.trials) + "," + std::to_string(seed) + "," +
               std::to_string(kCsvSchemaVersion) + "\n";
    }
    return out;
}

} // namespace arcmark
