#pragma once

// Watermarking capacity when token distributions are uniform over the class
// of two-point distributions q_{i,j} (mass 1/2 on tokens i and j).
// All quantities are in bits; 0 log 0 = 0.

#include <nlohmann/json_fwd.hpp>

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

namespace arcmark {

/// log2 N + sum_{t=1}^{N-1} (t/C(N,2)) log2(t/C(N,2)).
double capacity_closed_form(std::uint32_t N);

/// Limit of the closed form as N grows: 1 - log2(e)/2.
double capacity_limit();

/// Columns q_{i,j}, i < j, in lexicographic order.
std::vector<std::pair<std::uint32_t, std::uint32_t>> two_point_columns(std::uint32_t N);

/// Encoder x(w, q) over the two-point class: cells[w][c] is the token emitted
/// for letter w when Q is column c.  Tokens are 0-based.
struct EncoderTable {
    std::uint32_t N = 0;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> columns;
    std::vector<double> weights; ///< P_W
    std::vector<std::vector<std::uint32_t>> cells;

    /// Every cell holds one of its column's tokens and each column emits
    /// its first token with total weight 1/2.
    bool is_distortion_free(double tol = 1e-12) const;
    /// Occurrences of each token in row w.
    std::vector<std::size_t> row_counts(std::size_t w) const;
    double marginal_entropy_bits() const;
    double conditional_entropy_bits() const;
    double mutual_information_bits() const;
};

void to_json(nlohmann::json& j, const EncoderTable& table);

struct BruteForceResult {
    double bits = 0.0;
    EncoderTable table;
    std::uint64_t tables_examined = 0;
    /// Alphabet sizes that admit no distortion-free table under uniform P_W.
    std::vector<std::size_t> skipped_letter_counts;
};

/// Exhaustive search over uniform-P_W tables with 1..max_letters letters (N <= 5).
BruteForceResult brute_force_capacity(std::uint32_t N, std::size_t max_letters);

/// Two letters with weight 1/2: w1 emits min(i, j), w2 emits max(i, j).
EncoderTable optimal_construction(std::uint32_t N);

} // namespace arcmark
