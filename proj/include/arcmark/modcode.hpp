#pragma once

// Random linear code over Z_p.  A k-bit message m is mapped to the codeword
// C_m = m * G (mod p) where G is a k x n generator matrix with entries drawn
// uniformly from [0, p) by a keyed stream derived from a public seed.
//
// Column j of G depends only on (code_seed, p, j) and row i of a column is the
// i-th draw of that column's stream.  Truncating n or k therefore yields a
// sub-matrix of the larger code, which is what prefix decoding relies on.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace arcmark {

using Symbol = std::uint32_t;

/// Largest message length the exhaustive decoder will enumerate.
inline constexpr std::size_t kMaxMessageBits = 24;

struct CodeParams {
    std::size_t k = 1;
    std::size_t n = 1;
    std::uint32_t p = 2;
    std::uint64_t code_seed = 0;

    /// Throws ParameterError unless k in [1, 24], n >= 1, 2 <= p <= 2^30.
    void validate() const;
};

void to_json(nlohmann::json& j, const CodeParams& params);
void from_json(const nlohmann::json& j, CodeParams& params);

/// Bits are ordered so that bit i selects row i of G and contributes 2^i to value().
struct Message {
    std::vector<std::uint8_t> bits;

    static Message from_value(std::uint64_t value, std::size_t k);
    std::uint64_t value() const;
    std::size_t size() const { return bits.size(); }
    bool operator==(const Message&) const = default;
};

struct Codeword {
    std::vector<Symbol> symbols;
    std::size_t size() const { return symbols.size(); }
    bool operator==(const Codeword&) const = default;
};

class GeneratorMatrix {
public:
    GeneratorMatrix(CodeParams params, std::vector<Symbol> entries);

    const CodeParams& params() const { return params_; }
    std::size_t rows() const { return params_.k; }
    std::size_t cols() const { return params_.n; }
    Symbol at(std::size_t row, std::size_t col) const { return entries_[row * params_.n + col]; }
    /// Row `i` as a contiguous span of n symbols.
    std::span<const Symbol> row(std::size_t i) const { return {entries_.data() + i * params_.n, params_.n}; }

private:
    CodeParams params_;
    std::vector<Symbol> entries_; // row-major k x n
};

GeneratorMatrix make_generator(const CodeParams& params);
/// Column `col` of G (k entries); independent of params.n.
std::vector<Symbol> generator_column(const CodeParams& params, std::size_t col);
/// C_m(col) computed from a single generated column.
Symbol codeword_symbol(const Message& m, const CodeParams& params, std::size_t col);

/// C_m = m * G mod p.
Codeword encode(const Message& m, const GeneratorMatrix& g);
/// Encode using only the first `prefix` columns of G.
Codeword encode_prefix(const Message& m, const GeneratorMatrix& g, std::size_t prefix);

} // namespace arcmark
