#pragma once

// Per-token watermarking: codeword symbol + step secret -> channel input ->
// transport plan -> token sampled from the plan's conditional at that input.

#include "arcmark/circle.hpp"
#include "arcmark/modcode.hpp"
#include "arcmark/sideinfo.hpp"
#include "arcmark/sources.hpp"
#include "arcmark/transport.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <random>
#include <vector>

namespace arcmark {

struct EmbedConfig {
    CodeParams code;
    CircleParams circle;
    SolverConfig solver;
    /// p = r = N, phi = pi/(2N), closed-form plans for two-point inputs.
    bool theorem2_mode = false;
    std::uint64_t sampling_seed = 0;
    Keying keying = Keying::step_index;
    std::size_t context_window = 4;

    void validate() const;

    static EmbedConfig theorem2(std::uint32_t N, std::size_t k, std::size_t n, std::uint64_t code_seed);
    /// p = 2^k with r = r_multiple * p, phi = 0.
    static EmbedConfig message_sized(std::uint32_t N, std::size_t k, std::size_t n, std::uint64_t code_seed,
                                     std::uint32_t r_multiple = 4);
};

void to_json(nlohmann::json& j, const EmbedConfig& cfg);
void from_json(const nlohmann::json& j, EmbedConfig& cfg);

struct StepDiagnostics {
    double support_entropy = 0.0; ///< bits
    std::size_t support_size = 0;
    int solver_iterations = 0;
    bool closed_form = false;
};

struct StepOutcome {
    TokenId token = 0;
    StepDiagnostics diagnostics;
};

/// The plan used at one step.  Point masses and (in theorem-2 mode) two-point
/// inputs take closed forms; everything else goes through Sinkhorn.
TransportPlan plan_for_step(const TokenDistribution& q, Symbol symbol, const StepSecret& secret,
                            const EmbedConfig& cfg, StepDiagnostics* diagnostics = nullptr);

StepOutcome embed_step(const TokenDistribution& q, Symbol symbol, const StepSecret& secret, const EmbedConfig& cfg,
                       std::mt19937_64& rng);

struct WatermarkTrace {
    std::vector<TokenId> tokens;
    std::vector<std::uint32_t> z_indices; ///< key value v_t used at each step
    Codeword codeword;
    std::vector<double> per_step_support_entropy;
    double solver_seconds = 0.0;

    // metadata needed to decode
    std::uint32_t N = 0;
    std::size_t k = 0;
    std::uint32_t p = 0;
    std::uint32_t r = 0;
    double phi = 0.0;
    std::uint64_t code_seed = 0;
    std::uint64_t stream_id = 0;
    bool theorem2_mode = false;
    Keying keying = Keying::step_index;
    std::size_t context_window = 4;
};

/// Serialised form omits the master key and the per-step diagnostics.
void to_json(nlohmann::json& j, const WatermarkTrace& trace);
void from_json(const nlohmann::json& j, WatermarkTrace& trace);

/// Sampling generator for a sequence; independent of the side-information PRF.
std::mt19937_64 sampling_rng(std::uint64_t sampling_seed);

/// Embeds the first `steps` symbols of encode(m, G) (all n when steps == 0).
WatermarkTrace embed_sequence(const Message& m, TokenSource& source, const MasterKey& mk, const EmbedConfig& cfg,
                              const GeneratorMatrix& g, std::size_t steps = 0);
WatermarkTrace embed_sequence(const Message& m, TokenSource& source, const MasterKey& mk, const EmbedConfig& cfg);

} // namespace arcmark
