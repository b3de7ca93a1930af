#pragma once

// Monte-Carlo experiment engine: accuracy vs. token count, distortion checks,
// key-resolution ablation and capacity sweeps.  All randomness is derived from
// (master_seed, trial index), so identical specs give identical output.

#include "arcmark/decoder.hpp"
#include "arcmark/embedder.hpp"
#include "arcmark/sources.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace arcmark {

inline constexpr int kCsvSchemaVersion = 1;
inline constexpr const char* kCsvHeader = "n,k,p,r,metric,value,sem,trials,seed,schema_version";

struct ExperimentSpec {
    EmbedConfig embed;
    SourceSpec source;
    DistanceFn distance;
    std::size_t trials = 100;
    std::vector<std::size_t> n_grid;
    std::uint64_t master_seed = 0;
    std::string output_path;
    unsigned threads = 1; ///< 0 = hardware concurrency

    void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentSpec& spec);
/// Requires "seed" (the master seed); everything else has defaults.
void from_json(const nlohmann::json& j, ExperimentSpec& spec);

struct ResultRow {
    std::size_t n = 0;
    std::size_t k = 0;
    std::uint32_t p = 0;
    std::uint32_t r = 0;
    double message_accuracy = 0.0;
    double bit_accuracy = 0.0;
    double sem_message = 0.0;
    double sem_bit = 0.0;
    double mean_margin = 0.0; ///< over trials with a finite margin
    double wall_time = 0.0;   ///< seconds for the whole experiment
    double solver_seconds_per_token = 0.0;
    std::size_t trials = 0; ///< trials that completed
};

struct ExperimentResult {
    std::vector<ResultRow> rows;
    std::size_t excluded = 0;
    std::vector<std::string> failures;
};

/// Sample standard deviation (n - 1 denominator) over sqrt(n); 0 for n < 2.
double standard_error(std::span<const double> values);

ExperimentResult run_accuracy_experiment(const ExperimentSpec& spec);

/// Deterministic CSV: message_accuracy, bit_accuracy and mean_margin per row.
std::string results_csv(std::span<const ResultRow> rows, std::uint64_t seed);
void write_text_file(const std::string& path, const std::string& text);

struct DistortionSymbolReport {
    Symbol symbol = 0;
    double analytic_max_deviation = 0.0;
    double empirical_tv = 0.0;
    double chi_square = 0.0;
    std::size_t dof = 0;
    double p_value = 1.0;
};

struct DistortionReport {
    std::vector<DistortionSymbolReport> per_symbol;
    std::size_t samples = 0;
    double max_analytic_deviation = 0.0;
    double max_empirical_tv = 0.0;
    /// max - min of the analytic deviation across symbols
    double analytic_spread = 0.0;
};

void to_json(nlohmann::json& j, const DistortionReport& report);

/// (a) For each symbol, the plan's conditionals averaged over the r keys are
/// compared to Q.  (b) `samples` tokens are drawn, each with a fresh (v, Pi),
/// and compared to Q by total variation and a chi-square test.  An empty
/// `symbols` list means every symbol in [0, p).
DistortionReport run_distortion_test(const EmbedConfig& cfg, const TokenDistribution& q, std::size_t samples,
                                     std::uint64_t seed, std::vector<Symbol> symbols = {});

/// Repeats the accuracy experiment for each key resolution r.
std::vector<ResultRow> run_r_ablation(const ExperimentSpec& spec, std::span<const std::uint32_t> r_values);

struct SweepCell {
    double rho = 0.0;
    std::size_t n = 0;
    std::size_t k = 0;
    double error_rate = 0.0;
    double sem = 0.0;
    std::size_t trials = 0;
    bool skipped = false;
};

/// Theorem-2 configuration on the uniform two-point source with the log-ML
/// distance.  For each rate fraction rho and length n, k = max(1, floor(rho * R_cap(N) * n)).
std::vector<SweepCell> run_capacity_sweep(std::uint32_t N, std::span<const double> rates,
                                          std::span<const std::size_t> n_grid, std::size_t trials,
                                          std::uint64_t seed, unsigned threads = 1);

std::string sweep_csv(std::span<const SweepCell> cells, std::uint32_t N, std::uint64_t seed);

} // namespace arcmark
