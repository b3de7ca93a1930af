#include "arcmark/bridge.hpp"
#include "arcmark/capacity.hpp"
#include "arcmark/config.hpp"
#include "arcmark/decoder.hpp"
#include "arcmark/embedder.hpp"
#include "arcmark/error.hpp"
#include "arcmark/harness.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

using namespace arcmark;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitTrials = 3;
constexpr const char* kKeyEnv = "ARCMARK_MASTER_KEY";

struct Globals {
    std::string config_path;
    std::vector<std::string> sets;
};

// "a.b.c=value"; the value is parsed as JSON when possible, else kept as a string.
void apply_set(json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ParameterError("--set expects key.path=value, got " + assignment);
    const std::string path = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (!node->is_object()) *node = json::object();
        if (dot == std::string::npos) {
            (*node)[key] = value;
            break;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
}

json load_config(const Globals& g, json defaults) {
    if (!g.config_path.empty()) merge_json(defaults, load_json_file(g.config_path));
    for (const auto& s : g.sets) apply_set(defaults, s);
    return defaults;
}

json default_embed(std::uint32_t N, std::size_t k, std::size_t n) {
    return EmbedConfig::message_sized(N, k, n, 1);
}

json default_experiment() {
    json j;
    j["embed"] = default_embed(32, 3, 256);
    j["source"] = SourceSpec{SourceKind::dirichlet, 32, 0.3, 0, 1.0, "", 0};
    j["distance"] = "identity";
    j["trials"] = 100;
    j["n_grid"] = {16, 32, 64, 128, 256};
    j["threads"] = 1;
    return j;
}

std::optional<Key256> configured_key(const json& doc) {
    if (auto mk = MasterKey::from_env(kKeyEnv, 0)) return mk->key;
    if (doc.contains("master_key")) return MasterKey::from_hex(doc.at("master_key").get<std::string>(), 0).key;
    return std::nullopt;
}

// Real key from the environment or config; a simulation key from --key-seed otherwise.
MasterKey resolve_key(const json& doc, std::optional<std::uint64_t> key_seed, std::uint64_t stream_id) {
    if (auto key = configured_key(doc)) return MasterKey{*key, stream_id};
    if (key_seed) {
        MasterKey mk = MasterKey::from_seed(*key_seed, stream_id);
        return mk;
    }
    throw ParameterError(std::string("no master key: set ") + kKeyEnv + ", config master_key, or --key-seed");
}

Message parse_message(const std::string& text, std::size_t k) {
    if (text.rfind("0b", 0) == 0) {
        const std::string bits = text.substr(2);
        if (bits.size() != k) throw ParameterError("message has " + std::to_string(bits.size()) + " bits, k = " +
                                                   std::to_string(k));
        Message m;
        // written most significant bit first
        for (auto it = bits.rbegin(); it != bits.rend(); ++it) {
            if (*it != '0' && *it != '1') throw ParameterError("message bits must be 0 or 1");
            m.bits.push_back(static_cast<std::uint8_t>(*it - '0'));
        }
        return m;
    }
    std::uint64_t value = 0;
    try {
        std::size_t used = 0;
        value = std::stoull(text, &used, 0);
        if (used != text.size()) throw std::invalid_argument(text);
    } catch (const std::exception&) {
        throw ParameterError("cannot parse message " + text);
    }
    if (k < 64 && value >> k) throw ParameterError("message value does not fit in k bits");
    return Message::from_value(value, k);
}

void emit(const json& j, const std::string& path) {
    if (path.empty() || path == "-") {
        std::cout << j.dump(2) << '\n';
    } else {
        write_text_file(path, j.dump(2) + "\n");
    }
}

void emit_text(const std::string& text, const std::string& path) {
    if (path.empty() || path == "-") {
        std::cout << text;
    } else {
        write_text_file(path, text);
    }
}

template <class T>
std::vector<T> parse_list(const std::string& text) {
    std::vector<T> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            if constexpr (std::is_floating_point_v<T>) {
                out.push_back(static_cast<T>(std::stod(item)));
            } else {
                out.push_back(static_cast<T>(std::stoull(item)));
            }
        } catch (const std::exception&) {
            throw ParameterError("cannot parse list entry " + item);
        }
    }
    return out;
}

ExperimentSpec experiment_spec(const json& doc) {
    ExperimentSpec spec = doc.get<ExperimentSpec>();
    if (spec.source.kind != SourceKind::replay) spec.source.N = spec.embed.circle.N;
    return spec;
}

int report_experiment(const ExperimentResult& result, std::size_t trials, double max_failure_fraction) {
    for (const auto& f : result.failures) std::cerr << "excluded " << f << '\n';
    if (result.excluded > 0) std::cerr << result.excluded << " of " << trials << " trials excluded\n";
    if (static_cast<double>(result.excluded) > max_failure_fraction * static_cast<double>(trials)) return kExitTrials;
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"arcmark: multi-bit distortion-free watermark for token streams"};
    app.require_subcommand(1);
    Globals globals;
    app.add_option("--config", globals.config_path, "JSON config file")->check(CLI::ExistingFile);
    app.add_option("--set", globals.sets, "Override a config field: key.path=value (repeatable)");

    // encode
    auto* encode_cmd = app.add_subcommand("encode", "Encode a message with the keyed linear code");
    std::size_t enc_k = 3, enc_n = 16;
    std::uint32_t enc_p = 8;
    std::uint64_t enc_seed = 1;
    std::string enc_message = "0";
    encode_cmd->add_option("--k", enc_k, "message bits");
    encode_cmd->add_option("--n", enc_n, "code length");
    encode_cmd->add_option("--p", enc_p, "alphabet size");
    encode_cmd->add_option("--code-seed", enc_seed, "generator seed");
    encode_cmd->add_option("--message", enc_message, "integer value or 0b-prefixed bit string")->required();

    // embed
    auto* embed_cmd = app.add_subcommand("embed", "Generate a watermarked token sequence from a synthetic source");
    std::string embed_message = "0", embed_out;
    std::optional<std::uint64_t> embed_key_seed;
    std::uint64_t embed_stream = 0;
    std::size_t embed_steps = 0;
    embed_cmd->add_option("--message", embed_message, "integer value or 0b-prefixed bit string")->required();
    embed_cmd->add_option("--key-seed", embed_key_seed, "derive a simulation key from this seed");
    embed_cmd->add_option("--stream-id", embed_stream, "stream id for the side information");
    embed_cmd->add_option("--steps", embed_steps, "tokens to emit (default: code length)");
    embed_cmd->add_option("--out", embed_out, "trace output path (default stdout)");

    // decode
    auto* decode_cmd = app.add_subcommand("decode", "Recover the message from a trace");
    std::string decode_trace, decode_distance = "identity", decode_out;
    std::optional<std::uint64_t> decode_key_seed;
    unsigned decode_threads = 1;
    decode_cmd->add_option("--trace", decode_trace, "trace JSON from embed")->required()->check(CLI::ExistingFile);
    decode_cmd->add_option("--distance", decode_distance, "identity or log_ml");
    decode_cmd->add_option("--key-seed", decode_key_seed, "simulation key seed used at embedding");
    decode_cmd->add_option("--threads", decode_threads, "decoder threads (0 = all cores)");
    decode_cmd->add_option("--out", decode_out, "output path (default stdout)");

    // capacity
    auto* capacity_cmd = app.add_subcommand("capacity", "Watermarking capacity for the two-point source class");
    std::uint32_t cap_N = 3;
    bool cap_brute = false, cap_limit = false;
    std::size_t cap_letters = 4;
    capacity_cmd->add_option("--N", cap_N, "vocabulary size")->required();
    capacity_cmd->add_flag("--brute-force", cap_brute, "enumerate encoder tables (N <= 5)");
    capacity_cmd->add_option("--max-letters", cap_letters, "largest message alphabet for --brute-force");
    capacity_cmd->add_flag("--limit", cap_limit, "also report the large-N limit");

    // dftest
    auto* df_cmd = app.add_subcommand("dftest", "Check distortion-freeness on one fixed distribution");
    std::optional<std::uint64_t> df_seed;
    std::size_t df_samples = 100000;
    std::string df_dist = "dirichlet", df_out;
    df_cmd->add_option("--seed", df_seed, "seed for the distribution, keys and sampling")->required();
    df_cmd->add_option("--samples", df_samples, "empirical draws per symbol");
    df_cmd->add_option("--dist", df_dist, "uniform, dirichlet, point or two_point");
    df_cmd->add_option("--out", df_out, "output path (default stdout)");

    // experiment
    auto* exp_cmd = app.add_subcommand("experiment", "Message and bit accuracy versus token count");
    std::optional<std::uint64_t> exp_seed;
    std::optional<std::size_t> exp_trials;
    std::optional<unsigned> exp_threads;
    std::string exp_grid, exp_out;
    double max_failures = 0.0;
    exp_cmd->add_option("--seed", exp_seed, "master seed")->required();
    exp_cmd->add_option("--trials", exp_trials, "Monte-Carlo trials");
    exp_cmd->add_option("--n-grid", exp_grid, "comma-separated token counts");
    exp_cmd->add_option("--threads", exp_threads, "worker threads (0 = all cores)");
    exp_cmd->add_option("--out", exp_out, "CSV output path (default: config output, else stdout)");
    exp_cmd->add_option("--max-failure-fraction", max_failures, "tolerated fraction of excluded trials");

    // ablate-r
    auto* abl_cmd = app.add_subcommand("ablate-r", "Accuracy and solver time across key resolutions r");
    std::string abl_rs = "64,256";
    abl_cmd->add_option("--seed", exp_seed, "master seed")->required();
    abl_cmd->add_option("--r", abl_rs, "comma-separated r values");
    abl_cmd->add_option("--trials", exp_trials, "Monte-Carlo trials");
    abl_cmd->add_option("--n-grid", exp_grid, "comma-separated token counts");
    abl_cmd->add_option("--threads", exp_threads, "worker threads (0 = all cores)");
    abl_cmd->add_option("--out", exp_out, "CSV output path (default stdout)");

    // sweep
    auto* sweep_cmd = app.add_subcommand("sweep", "Message error rate at fractions of capacity");
    std::uint32_t sweep_N = 16;
    std::string sweep_rates = "0.25", sweep_grid = "64,128,256";
    sweep_cmd->add_option("--seed", exp_seed, "master seed")->required();
    sweep_cmd->add_option("--N", sweep_N, "vocabulary size (even)");
    sweep_cmd->add_option("--rates", sweep_rates, "comma-separated fractions of capacity");
    sweep_cmd->add_option("--n-grid", sweep_grid, "comma-separated token counts");
    sweep_cmd->add_option("--trials", exp_trials, "Monte-Carlo trials per cell");
    sweep_cmd->add_option("--threads", exp_threads, "worker threads (0 = all cores)");
    sweep_cmd->add_option("--out", exp_out, "CSV output path (default stdout)");

    // serve
    auto* serve_cmd = app.add_subcommand("serve", "Answer bridge requests on stdin/stdout");
    std::string serve_record;
    serve_cmd->add_option("--record", serve_record, "append a replay file of every step");

    // verify-replay
    auto* verify_cmd = app.add_subcommand("verify-replay", "Check that a recorded replay reproduces its tokens");
    std::string verify_replay_path, verify_init_path;
    verify_cmd->add_option("--replay", verify_replay_path, "replay file")->required()->check(CLI::ExistingFile);
    verify_cmd->add_option("--init", verify_init_path, "INIT message of the session (JSON)")
        ->required()
        ->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    try {
        if (*encode_cmd) {
            const CodeParams params{enc_k, enc_n, enc_p, enc_seed};
            params.validate();
            const Message m = parse_message(enc_message, enc_k);
            const Codeword cw = encode(m, make_generator(params));
            emit(json{{"message_bits", m.bits}, {"message_value", m.value()}, {"codeword", cw.symbols}}, "");
            return 0;
        }

        if (*capacity_cmd) {
            json out{{"N", cap_N}, {"closed_form_bits", capacity_closed_form(cap_N)}};
            if (cap_limit) out["limit_bits"] = capacity_limit();
            if (cap_brute) {
                const BruteForceResult res = brute_force_capacity(cap_N, cap_letters);
                out["brute_force_bits"] = res.bits;
                out["table"] = res.table;
                out["tables_examined"] = res.tables_examined;
            }
            emit(out, "");
            return 0;
        }

        if (*embed_cmd) {
            json defaults;
            defaults["embed"] = default_embed(8, 3, 64);
            defaults["source"] = SourceSpec{SourceKind::dirichlet, 8, 0.3, 0, 1.0, "", 0};
            const json doc = load_config(globals, defaults);
            const EmbedConfig cfg = doc.at("embed").get<EmbedConfig>();
            cfg.validate();
            SourceSpec source_spec = doc.at("source").get<SourceSpec>();
            if (source_spec.kind != SourceKind::replay) source_spec.N = cfg.circle.N;
            auto source = make_source(source_spec);
            const MasterKey mk = resolve_key(doc, embed_key_seed, embed_stream);
            const Message m = parse_message(embed_message, cfg.code.k);
            const WatermarkTrace trace = embed_sequence(m, *source, mk, cfg, make_generator(cfg.code), embed_steps);
            emit(json(trace), embed_out);
            return 0;
        }

        if (*decode_cmd) {
            const json doc = load_config(globals, json::object());
            const WatermarkTrace trace = load_json_file(decode_trace).get<WatermarkTrace>();
            EmbedConfig cfg;
            cfg.circle = CircleParams{trace.N, trace.p, trace.r, trace.phi};
            cfg.code = CodeParams{trace.k, std::max<std::size_t>(trace.tokens.size(), 1), trace.p, trace.code_seed};
            cfg.theorem2_mode = trace.theorem2_mode;
            cfg.keying = trace.keying;
            cfg.context_window = trace.context_window;
            const MasterKey mk = resolve_key(doc, decode_key_seed, trace.stream_id);
            const DistanceFn f = distance_from_string(decode_distance, trace.N);
            const DecodeResult res = decode(trace.tokens, mk, cfg, f, decode_threads);
            emit(json(res), decode_out);
            return 0;
        }

        if (*df_cmd) {
            json defaults;
            defaults["embed"] = default_embed(8, 3, 1);
            const json doc = load_config(globals, defaults);
            const EmbedConfig cfg = doc.at("embed").get<EmbedConfig>();
            const std::uint32_t N = cfg.circle.N;
            TokenDistribution q = TokenDistribution::uniform(N);
            if (df_dist == "dirichlet") {
                q = next_distribution(SourceSpec{SourceKind::dirichlet, N, 0.3, 0, 1.0, "", *df_seed}, 1);
            } else if (df_dist == "point") {
                q = TokenDistribution::point_mass(N, 0);
            } else if (df_dist == "two_point") {
                q = TokenDistribution::two_point(N, 0, 1);
            } else if (df_dist != "uniform") {
                throw ParameterError("unknown --dist " + df_dist);
            }
            const DistortionReport report = run_distortion_test(cfg, q, df_samples, *df_seed);
            emit(json(report), df_out);
            return 0;
        }

        if (*exp_cmd || *abl_cmd) {
            json doc = load_config(globals, default_experiment());
            doc["seed"] = *exp_seed;
            if (exp_trials) doc["trials"] = *exp_trials;
            if (exp_threads) doc["threads"] = *exp_threads;
            if (!exp_grid.empty()) doc["n_grid"] = parse_list<std::size_t>(exp_grid);
            const ExperimentSpec spec = experiment_spec(doc);
            const std::string out_path = exp_out.empty() ? spec.output_path : exp_out;
            if (*exp_cmd) {
                const ExperimentResult result = run_accuracy_experiment(spec);
                emit_text(results_csv(result.rows, spec.master_seed), out_path);
                return report_experiment(result, spec.trials, max_failures);
            }
            const auto rs = parse_list<std::uint32_t>(abl_rs);
            const auto rows = run_r_ablation(spec, rs);
            std::string csv = results_csv(rows, spec.master_seed);
            // solver time per token, one extra row per r
            for (const auto& row : rows)
                if (row.n == spec.n_grid.back()) {
                    char value[64];
                    std::snprintf(value, sizeof value, "%.6g", row.solver_seconds_per_token);
                    csv += std::to_string(row.n) + "," + std::to_string(row.k) + "," + std::to_string(row.p) + "," +
                           std::to_string(row.r) + ",solver_seconds_per_token," + value + ",0," +
                           std::to_string(row.trials) + "," + std::to_string(spec.master_seed) + "," +
                           std::to_string(kCsvSchemaVersion) + "\n";
                }
            emit_text(csv, out_path);
            return 0;
        }

        if (*sweep_cmd) {
            const auto rates = parse_list<double>(sweep_rates);
            const auto grid = parse_list<std::size_t>(sweep_grid);
            const auto cells =
                run_capacity_sweep(sweep_N, rates, grid, exp_trials.value_or(100), *exp_seed, exp_threads.value_or(1));
            emit_text(sweep_csv(cells, sweep_N, *exp_seed), exp_out);
            return 0;
        }

        if (*serve_cmd) {
            json defaults;
            defaults["embed"] = default_embed(8, 3, 1);
            const json doc = load_config(globals, defaults);
            ServeOptions options;
            options.base = doc.at("embed").get<EmbedConfig>();
            options.key = configured_key(doc);
            std::ofstream record;
            if (!serve_record.empty()) {
                record.open(serve_record, std::ios::binary);
                if (!record) throw ParameterError("cannot write " + serve_record);
                options.record = &record;
            }
            const ServeSummary summary = serve(std::cin, std::cout, options);
            if (!summary.ok) {
                std::cerr << "serve: " << summary.error << '\n';
                return 1;
            }
            return 0;
        }

        if (*verify_cmd) {
            json defaults;
            defaults["embed"] = default_embed(8, 3, 1);
            const json doc = load_config(globals, defaults);
            const json init = load_json_file(verify_init_path);
            const EmbedConfig cfg = config_from_init(init, doc.at("embed").get<EmbedConfig>());
            const Message m = message_from_init(init);
            const auto key = configured_key(doc);
            if (!key) throw ParameterError(std::string("no master key: set ") + kKeyEnv + " or config master_key");
            const ReplaySource replay(verify_replay_path);
            const VerifyResult res =
                verify_replay(replay.records(), MasterKey{*key, init.at("stream_id").get<std::uint64_t>()}, cfg, m);
            emit(json{{"ok", res.ok},
                      {"steps_checked", res.steps_checked},
                      {"first_divergent_step", res.first_divergent_step}},
                 "");
            return res.ok ? 0 : 1;
        }
    } catch (const ParameterError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const json::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
