#include "arcmark/modcode.hpp"

#include "arcmark/error.hpp"
#include "arcmark/prf.hpp"

#include <nlohmann/json.hpp>

#include <string>

namespace arcmark {

namespace {
constexpr std::uint32_t kColumnTag = 1;
}

void CodeParams::validate() const {
    if (k == 0) throw ParameterError("code: k must be at least 1");
    if (k > kMaxMessageBits) throw ParameterError("code: k must not exceed " + std::to_string(kMaxMessageBits));
    if (n == 0) throw ParameterError("code: n must be at least 1");
    if (p < 2) throw ParameterError("code: p must be at least 2");
    if (p > (1U << 30)) throw ParameterError("code: p must not exceed 2^30");
}

void to_json(nlohmann::json& j, const CodeParams& params) {
    j = nlohmann::json{{"k", params.k}, {"n", params.n}, {"p", params.p}, {"code_seed", params.code_seed}};
}

void from_json(const nlohmann::json& j, CodeParams& params) {
    j.at("k").get_to(params.k);
    j.at("n").get_to(params.n);
    j.at("p").get_to(params.p);
    params.code_seed = j.value("code_seed", std::uint64_t{0});
}

Message Message::from_value(std::uint64_t value, std::size_t k) {
    Message m;
    m.bits.resize(k);
    for (std::size_t i = 0; i < k; ++i) m.bits[i] = static_cast<std::uint8_t>((value >> i) & 1U);
    return m;
}

std::uint64_t Message::value() const {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < bits.size(); ++i)
        if (bits[i]) v |= std::uint64_t{1} << i;
    return v;
}

GeneratorMatrix::GeneratorMatrix(CodeParams params, std::vector<Symbol> entries)
    : params_(params), entries_(std::move(entries)) {
    params_.validate();
    if (entries_.size() != params_.k * params_.n) throw ParameterError("generator: entry count mismatch");
    for (Symbol s : entries_)
        if (s >= params_.p) throw ParameterError("generator: entry out of range");
}

namespace {

Key256 generator_key(const CodeParams& params) {
    return derive_key("arcmark.generator.v1", params.code_seed, params.p);
}

void fill_column(const Key256& key, const CodeParams& params, std::size_t col, Symbol* out, std::size_t stride) {
    PrfStream stream(key, kColumnTag, col);
    for (std::size_t row = 0; row < params.k; ++row)
        out[row * stride] = static_cast<Symbol>(stream.uniform_below(params.p));
}

} // namespace

GeneratorMatrix make_generator(const CodeParams& params) {
    params.validate();
    const Key256 key = generator_key(params);
    std::vector<Symbol> entries(params.k * params.n);
    for (std::size_t col = 0; col < params.n; ++col) fill_column(key, params, col, entries.data() + col, params.n);
    return GeneratorMatrix(params, std::move(entries));
}

std::vector<Symbol> generator_column(const CodeParams& params, std::size_t col) {
    params.validate();
    std::vector<Symbol> column(params.k);
    fill_column(generator_key(params), params, col, column.data(), 1);
    return column;
}

Symbol codeword_symbol(const Message& m, const CodeParams& params, std::size_t col) {
    if (m.size() != params.k) throw ParameterError("codeword_symbol: message length differs from k");
    const auto column = generator_column(params, col);
    std::uint64_t s = 0;
    for (std::size_t i = 0; i < params.k; ++i)
        if (m.bits[i]) s += column[i];
    return static_cast<Symbol>(s % params.p);
}

Codeword encode_prefix(const Message& m, const GeneratorMatrix& g, std::size_t prefix) {
    if (m.size() != g.rows())
        throw ParameterError("encode: message has " + std::to_string(m.size()) + " bits, code expects " +
                             std::to_string(g.rows()));
    if (prefix > g.cols()) throw ParameterError("encode: prefix longer than code");
    for (auto b : m.bits)
        if (b > 1) throw ParameterError("encode: message bits must be 0 or 1");
    const std::uint32_t p = g.params().p;
    Codeword out;
    out.symbols.assign(prefix, 0);
    for (std::size_t i = 0; i < g.rows(); ++i) {
        if (!m.bits[i]) continue;
        const auto row = g.row(i);
        for (std::size_t t = 0; t < prefix; ++t) {
            const Symbol s = out.symbols[t] + row[t];
            out.symbols[t] = s >= p ? s - p : s;
        }
    }
    return out;
}

Codeword encode(const Message& m, const GeneratorMatrix& g) { return encode_prefix(m, g, g.cols()); }

} // namespace arcmark
