#include "arcmark/decoder.hpp"

#include "arcmark/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <thread>

namespace arcmark {

DistanceFn DistanceFn::log_ml(std::uint32_t N) {
    if (N < 2) throw ParameterError("log_ml distance needs N >= 2");
    return DistanceFn{DistanceKind::log_ml, std::numbers::pi - std::numbers::pi / (2.0 * N)};
}

double DistanceFn::operator()(double d) const {
    if (kind == DistanceKind::identity) return d;
    if (d >= d_max - kAngleTolerance) return std::numeric_limits<double>::infinity();
    return -std::log1p(-d / d_max);
}

std::string to_string(DistanceKind kind) { return kind == DistanceKind::log_ml ? "log_ml" : "identity"; }

DistanceFn distance_from_string(const std::string& name, std::uint32_t N) {
    if (name == "identity") return DistanceFn::identity();
    if (name == "log_ml") return DistanceFn::log_ml(N);
    throw ParameterError("unknown distance function: " + name);
}

void to_json(nlohmann::json& j, const DecodeResult& result) {
    auto number_or_null = [](double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); };
    j = nlohmann::json{{"message_bits", result.message.bits},
                       {"message_value", result.message.value()},
                       {"score", number_or_null(result.score)},
                       {"margin", number_or_null(result.margin)},
                       {"per_symbol_distances", result.per_symbol_distances}};
}

Angle recover_symbol_angle(TokenId token, const StepSecret& secret, const CircleParams& params) {
    if (token >= params.N || token >= secret.perm.size()) throw ParameterError("recover: token outside vocabulary");
    if (secret.v >= params.r) throw ParameterError("recover: key out of range");
    return Angle(kTwoPi * secret.perm[token] / params.N - kTwoPi * secret.v / params.r);
}

double score_message(const Message& m, std::span<const TokenId> tokens, std::span<const StepSecret> secrets,
                     const GeneratorMatrix& g, const DistanceFn& f, const CircleParams& params) {
    if (tokens.size() != secrets.size()) throw ParameterError("score: token and secret counts differ");
    const Codeword cw = encode_prefix(m, g, tokens.size());
    double total = 0.0;
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        const Angle received = recover_symbol_angle(tokens[t], secrets[t], params);
        total += f(angular_distance(received, symbol_angle(cw.symbols[t], params)));
    }
    return total;
}

std::vector<StepSecret> derive_secrets(std::span<const TokenId> tokens, const MasterKey& mk, const EmbedConfig& cfg) {
    std::vector<StepSecret> secrets;
    secrets.reserve(tokens.size());
    for (std::size_t t = 1; t <= tokens.size(); ++t)
        secrets.push_back(derive_secret(mk, cfg.keying, cfg.context_window, t, tokens.first(t - 1), cfg.circle.N,
                                        cfg.circle.r));
    return secrets;
}

namespace {

struct Candidate {
    double score = std::numeric_limits<double>::infinity();
    std::uint64_t message = std::numeric_limits<std::uint64_t>::max();
};

bool better(const Candidate& a, const Candidate& b) {
    if (std::isinf(a.score) && std::isinf(b.score)) return a.message < b.message;
    if (a.score < b.score - kScoreTieTolerance) return true;
    if (b.score < a.score - kScoreTieTolerance) return false;
    return a.message < b.message;
}

struct TopTwo {
    Candidate best, second;

    void offer(const Candidate& c) {
        if (better(c, best)) {
            second = best;
            best = c;
        } else if (better(c, second)) {
            second = c;
        }
    }
};

// Scores the Gray-code indices [lo, hi).  Successive candidates differ in one
// message bit, so the first `eager` codeword symbols are updated by adding or
// removing one row of G.  f >= 0, so a candidate is dropped as soon as its
// partial sum cannot beat the current runner-up; the few candidates that
// survive the eager prefix get their remaining symbols computed directly.
TopTwo scan_range(std::uint64_t lo, std::uint64_t hi, const GeneratorMatrix& g, std::size_t n,
                  std::span<const double> table) {
    const std::uint32_t p = g.params().p;
    const std::size_t k = g.rows();
    const std::size_t eager = std::min<std::size_t>(n, 64);
    std::vector<std::vector<Symbol>> add(k, std::vector<Symbol>(eager)), sub(k, std::vector<Symbol>(eager));
    for (std::size_t i = 0; i < k; ++i) {
        const auto row = g.row(i);
        for (std::size_t t = 0; t < eager; ++t) {
            add[i][t] = row[t];
            sub[i][t] = row[t] == 0 ? 0 : p - row[t];
        }
    }
    // column-major copy of G for the lazily computed tail
    std::vector<Symbol> tail((n - eager) * k);
    for (std::size_t t = eager; t < n; ++t)
        for (std::size_t i = 0; i < k; ++i) tail[(t - eager) * k + i] = g.at(i, t);

    std::uint64_t message = lo ^ (lo >> 1);
    std::vector<Symbol> cw(eager, 0);
    for (std::size_t i = 0; i < k; ++i) {
        if (!((message >> i) & 1U)) continue;
        for (std::size_t t = 0; t < eager; ++t) {
            const Symbol s = cw[t] + add[i][t];
            cw[t] = s >= p ? s - p : s;
        }
    }

    TopTwo top;
    for (std::uint64_t gray = lo; gray < hi; ++gray) {
        if (gray != lo) {
            const int bit = std::countr_zero(gray);
            message ^= std::uint64_t{1} << bit;
            const auto& delta = ((message >> bit) & 1U) ? add[bit] : sub[bit];
            for (std::size_t t = 0; t < eager; ++t) {
                const Symbol s = cw[t] + delta[t];
                cw[t] = s >= p ? s - p : s;
            }
        }
        // Capped so that infinite partial sums are always dropped: they can
        // never be the answer and only ever show up as an infinite margin.
        const double limit = std::min(top.second.score + kScoreTieTolerance, std::numeric_limits<double>::max());
        double total = 0.0;
        bool dropped = false;
        for (std::size_t t = 0; t < eager; ++t) {
            total += table[t * p + cw[t]];
            if ((t & 7U) == 7U && total > limit) {
                dropped = true;
                break;
            }
        }
        for (std::size_t t = eager; t < n && !dropped; ++t) {
            const Symbol* col = tail.data() + (t - eager) * k;
            std::uint64_t s = 0;
            for (std::size_t i = 0; i < k; ++i)
                if ((message >> i) & 1U) s += col[i];
            total += table[t * p + static_cast<Symbol>(s % p)];
            if (total > limit) dropped = true;
        }
        if (!dropped) top.offer(Candidate{total, message});
    }
    return top;
}

} // namespace

DecodeResult decode_with_secrets(std::span<const TokenId> tokens, std::span<const StepSecret> secrets,
                                 const GeneratorMatrix& g, const DistanceFn& f, const CircleParams& params,
                                 unsigned threads) {
    const std::size_t k = g.rows();
    if (k > kMaxMessageBits) throw CapabilityError("exhaustive decoding supports at most 24 message bits");
    if (tokens.size() != secrets.size()) throw ParameterError("decode: token and secret counts differ");
    if (tokens.size() > g.cols()) throw ParameterError("decode: more tokens than codeword symbols");
    if (g.params().p != params.p) throw ParameterError("decode: code and circle disagree on p");
    const std::size_t n = tokens.size();
    const std::uint32_t p = params.p;
    if (n * static_cast<std::size_t>(p) > (std::size_t{1} << 28))
        throw CapabilityError("decode: n * p too large for the distance table");

    std::vector<Angle> received(n);
    for (std::size_t t = 0; t < n; ++t) received[t] = recover_symbol_angle(tokens[t], secrets[t], params);
    std::vector<Angle> symbols(p);
    for (std::uint32_t s = 0; s < p; ++s) symbols[s] = symbol_angle(s, params);
    std::vector<double> table(n * p);
    for (std::size_t t = 0; t < n; ++t)
        for (std::uint32_t s = 0; s < p; ++s) table[t * p + s] = f(angular_distance(received[t], symbols[s]));

    const std::uint64_t total = std::uint64_t{1} << k;
    if (threads == 0) threads = std::max(1U, std::thread::hardware_concurrency());
    if (total < 4096) threads = 1;
    threads = static_cast<unsigned>(std::min<std::uint64_t>(threads, total));

    std::vector<TopTwo> partial(threads);
    if (threads == 1) {
        partial[0] = scan_range(0, total, g, n, table);
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < threads; ++w) {
            const std::uint64_t lo = total * w / threads;
            const std::uint64_t hi = total * (w + 1) / threads;
            pool.emplace_back([&, w, lo, hi] { partial[w] = scan_range(lo, hi, g, n, table); });
        }
        for (auto& th : pool) th.join();
    }
    TopTwo top;
    for (const auto& part : partial) {
        top.offer(part.best);
        top.offer(part.second);
    }

    if (std::isinf(top.best.score)) throw DecodeFailure("decode: every candidate message has infinite distance");

    DecodeResult result;
    result.message = Message::from_value(top.best.message, k);
    result.score = top.best.score;
    result.margin = std::isinf(top.second.score) ? std::numeric_limits<double>::infinity()
                                                 : std::max(0.0, top.second.score - top.best.score);
    const Codeword cw = encode_prefix(result.message, g, n);
    result.per_symbol_distances.resize(n);
    for (std::size_t t = 0; t < n; ++t)
        result.per_symbol_distances[t] = angular_distance(received[t], symbols[cw.symbols[t]]);
    return result;
}

DecodeResult decode(std::span<const TokenId> tokens, const MasterKey& mk, const EmbedConfig& cfg,
                    const DistanceFn& f, unsigned threads) {
    if (cfg.code.k > kMaxMessageBits) throw CapabilityError("exhaustive decoding supports at most 24 message bits");
    cfg.validate();
    if (tokens.size() > cfg.code.n) throw ParameterError("decode: more tokens than the code length");
    const GeneratorMatrix g = make_generator(cfg.code);
    const auto secrets = derive_secrets(tokens, mk, cfg);
    return decode_with_secrets(tokens, secrets, g, f, cfg.circle, threads);
}

double bit_accuracy(const Message& truth, const Message& estimate) {
    if (truth.size() != estimate.size()) throw ParameterError("bit_accuracy: message lengths differ");
    if (truth.size() == 0) throw ParameterError("bit_accuracy: empty messages");
    std::size_t agree = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) agree += truth.bits[i] == estimate.bits[i];
    return static_cast<double>(agree) / static_cast<double>(truth.size());
}

} // namespace arcmark
