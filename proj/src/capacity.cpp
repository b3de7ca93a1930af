#include "arcmark/capacity.hpp"

#include "arcmark/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace arcmark {
namespace {

double plogp(double x) { return x > 0.0 ? x * std::log2(x) : 0.0; }

double row_entropy(const std::vector<std::size_t>& counts, double total) {
    double h = 0.0;
    for (std::size_t c : counts) h -= plogp(static_cast<double>(c) / total);
    return h;
}

} // namespace

double capacity_closed_form(std::uint32_t N) {
    if (N < 2) throw ParameterError("capacity: N must be at least 2");
    const double pairs = 0.5 * N * (N - 1.0);
    double sum = 0.0;
    for (std::uint32_t t = 1; t < N; ++t) sum += plogp(t / pairs);
    return std::log2(static_cast<double>(N)) + sum;
}

double capacity_limit() { return 1.0 - 0.5 * std::numbers::log2e; }

std::vector<std::pair<std::uint32_t, std::uint32_t>> two_point_columns(std::uint32_t N) {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> cols;
    for (std::uint32_t i = 0; i < N; ++i)
        for (std::uint32_t j = i + 1; j < N; ++j) cols.emplace_back(i, j);
    return cols;
}

bool EncoderTable::is_distortion_free(double tol) const {
    if (cells.size() != weights.size()) return false;
    for (std::size_t c = 0; c < columns.size(); ++c) {
        double first = 0.0;
        for (std::size_t w = 0; w < cells.size(); ++w) {
            const auto x = cells[w][c];
            if (x != columns[c].first && x != columns[c].second) return false;
            if (x == columns[c].first) first += weights[w];
        }
        if (std::fabs(first - 0.5) > tol) return false;
    }
    return true;
}

std::vector<std::size_t> EncoderTable::row_counts(std::size_t w) const {
    std::vector<std::size_t> counts(N, 0);
    for (auto x : cells.at(w)) ++counts.at(x);
    return counts;
}

double EncoderTable::marginal_entropy_bits() const {
    std::vector<double> px(N, 0.0);
    const double pq = 1.0 / static_cast<double>(columns.size());
    for (std::size_t w = 0; w < cells.size(); ++w)
        for (auto x : cells[w]) px[x] += weights[w] * pq;
    double h = 0.0;
    for (double x : px) h -= plogp(x);
    return h;
}

double EncoderTable::conditional_entropy_bits() const {
    double h = 0.0;
    const double total = static_cast<double>(columns.size());
    for (std::size_t w = 0; w < cells.size(); ++w) h += weights[w] * row_entropy(row_counts(w), total);
    return h;
}

double EncoderTable::mutual_information_bits() const { return marginal_entropy_bits() - conditional_entropy_bits(); }

void to_json(nlohmann::json& j, const EncoderTable& table) {
    nlohmann::json cols = nlohmann::json::array();
    for (const auto& [a, b] : table.columns) cols.push_back({a, b});
    j = nlohmann::json{{"N", table.N}, {"columns", cols}, {"weights", table.weights}, {"cells", table.cells}};
}

namespace {

// Depth-first fill of the table one column at a time.  Each column picks the
// subset of letters (size d/2) that emit its first token; the first column
// is fixed because permuting letters leaves I(W;X) unchanged.
class TableSearch {
public:
    TableSearch(std::uint32_t N, std::size_t letters)
        : N_(N), d_(letters), columns_(two_point_columns(N)), counts_(letters, std::vector<std::size_t>(N, 0)),
          choice_(columns_.size(), 0) {
        for (std::uint32_t mask = 0; mask < (1U << d_); ++mask)
            if (static_cast<std::size_t>(std::popcount(mask)) * 2 == d_) subsets_.push_back(mask);
    }

    void run() { descend(0); }

    double best_conditional_entropy = std::numeric_limits<double>::infinity();
    std::vector<std::uint32_t> best_choice;
    std::uint64_t examined = 0;

    EncoderTable table_for(const std::vector<std::uint32_t>& choice) const {
        EncoderTable t;
        t.N = N_;
        t.columns = columns_;
        t.weights.assign(d_, 1.0 / static_cast<double>(d_));
        t.cells.assign(d_, std::vector<std::uint32_t>(columns_.size()));
        for (std::size_t c = 0; c < columns_.size(); ++c)
            for (std::size_t w = 0; w < d_; ++w)
                t.cells[w][c] = ((choice[c] >> w) & 1U) ? columns_[c].first : columns_[c].second;
        return t;
    }

private:
    void descend(std::size_t c) {
        if (c == columns_.size()) {
            ++examined;
            const double total = static_cast<double>(columns_.size());
            double h = 0.0;
            for (const auto& row : counts_) h += row_entropy(row, total);
            h /= static_cast<double>(d_);
            if (h < best_conditional_entropy - 1e-15) {
                best_conditional_entropy = h;
                best_choice = choice_;
            }
            return;
        }
        const std::size_t options = c == 0 ? 1 : subsets_.size();
        for (std::size_t s = 0; s < options; ++s) {
            const std::uint32_t mask = subsets_[s];
            apply(c, mask, +1);
            choice_[c] = mask;
            descend(c + 1);
            apply(c, mask, -1);
        }
    }

    void apply(std::size_t c, std::uint32_t mask, int sign) {
        for (std::size_t w = 0; w < d_; ++w) {
            const auto x = ((mask >> w) & 1U) ? columns_[c].first : columns_[c].second;
            counts_[w][x] += static_cast<std::size_t>(sign);
        }
    }

    std::uint32_t N_;
    std::size_t d_;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> columns_;
    std::vector<std::vector<std::size_t>> counts_;
    std::vector<std::uint32_t> subsets_;
    std::vector<std::uint32_t> choice_;
};

} // namespace

BruteForceResult brute_force_capacity(std::uint32_t N, std::size_t max_letters) {
    if (N < 2) throw ParameterError("brute force: N must be at least 2");
    if (N > 5) throw CapabilityError("brute force: N must not exceed 5");
    if (max_letters < 1 || max_letters > 8) throw ParameterError("brute force: letters must be in [1, 8]");

    BruteForceResult result;
    result.bits = -std::numeric_limits<double>::infinity();
    for (std::size_t d = 1; d <= max_letters; ++d) {
        // Under uniform P_W a column emits its first token with weight (#letters)/d,
        // which equals 1/2 only for even d.
        if (d % 2 != 0) {
            result.skipped_letter_counts.push_back(d);
            continue;
        }
        const double pairs = 0.5 * N * (N - 1.0);
        const double subsets = std::tgamma(d + 1.0) / std::pow(std::tgamma(d / 2.0 + 1.0), 2.0);
        if (std::pow(subsets, pairs - 1.0) > 2e9)
            throw CapabilityError("brute force: " + std::to_string(d) + " letters at N = " + std::to_string(N) +
                                  " is too many tables to enumerate");
        TableSearch search(N, d);
        search.run();
        result.tables_examined += search.examined;
        EncoderTable table = search.table_for(search.best_choice);
        const double bits = table.mutual_information_bits();
        if (bits > result.bits + 1e-12) {
            result.bits = bits;
            result.table = std::move(table);
        }
    }
    if (!std::isfinite(result.bits)) throw ParameterError("brute force: no feasible letter count up to the limit");
    return result;
}

EncoderTable optimal_construction(std::uint32_t N) {
    if (N < 2) throw ParameterError("optimal construction: N must be at least 2");
    EncoderTable t;
    t.N = N;
    t.columns = two_point_columns(N);
    t.weights = {0.5, 0.5};
    t.cells.assign(2, std::vector<std::uint32_t>(t.columns.size()));
    for (std::size_t c = 0; c < t.columns.size(); ++c) {
        t.cells[0][c] = std::min(t.columns[c].first, t.columns[c].second);
        t.cells[1][c] = std::max(t.columns[c].first, t.columns[c].second);
    }
    return t;
}

} // namespace arcmark
