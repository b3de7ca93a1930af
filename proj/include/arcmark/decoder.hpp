#pragma once

// Minimum-distance decoding over all 2^k candidate codewords.
//
//   C_hat(t)     = (2*pi*perm_t(x_t)/N - 2*pi*v_t/r) mod 2*pi
//   C_m^ang(t)   = 2*pi*C_m(t)/p + phi
//   D_m          = sum_t f(d(C_hat(t), C_m^ang(t)))
//   m_hat        = argmin_m D_m, ties to the smallest message value

#include "arcmark/circle.hpp"
#include "arcmark/embedder.hpp"
#include "arcmark/modcode.hpp"
#include "arcmark/sideinfo.hpp"

#include <nlohmann/json_fwd.hpp>

#include <span>
#include <string>
#include <vector>

namespace arcmark {

enum class DistanceKind { identity, log_ml };

struct DistanceFn {
    DistanceKind kind = DistanceKind::identity;
    double d_max = 0.0; ///< only used by log_ml

    static DistanceFn identity() { return {}; }
    /// f(d) = -log(1 - d/d_max) with d_max = pi - pi/(2N); +inf at d >= d_max.
    static DistanceFn log_ml(std::uint32_t N);

    double operator()(double d) const;
};

std::string to_string(DistanceKind kind);
DistanceFn distance_from_string(const std::string& name, std::uint32_t N);

/// Scores closer than this are treated as tied.
inline constexpr double kScoreTieTolerance = 1e-9;

struct DecodeResult {
    Message message;
    double score = 0.0;
    double margin = 0.0; ///< runner-up minus best, +inf if every other candidate is infinite
    std::vector<double> per_symbol_distances;
};

void to_json(nlohmann::json& j, const DecodeResult& result);

Angle recover_symbol_angle(TokenId token, const StepSecret& secret, const CircleParams& params);

double score_message(const Message& m, std::span<const TokenId> tokens, std::span<const StepSecret> secrets,
                     const GeneratorMatrix& g, const DistanceFn& f, const CircleParams& params);

/// Re-derives the secrets for tokens 1..n from the master key.
std::vector<StepSecret> derive_secrets(std::span<const TokenId> tokens, const MasterKey& mk, const EmbedConfig& cfg);

/// Exhaustive decoder over precomputed secrets.  Uses the first tokens.size()
/// columns of G.  `threads` = 0 picks the hardware concurrency.
DecodeResult decode_with_secrets(std::span<const TokenId> tokens, std::span<const StepSecret> secrets,
                                 const GeneratorMatrix& g, const DistanceFn& f, const CircleParams& params,
                                 unsigned threads = 1);

DecodeResult decode(std::span<const TokenId> tokens, const MasterKey& mk, const EmbedConfig& cfg,
                    const DistanceFn& f, unsigned threads = 1);

/// Fraction of positions where the two messages agree.
double bit_accuracy(const Message& truth, const Message& estimate);

} // namespace arcmark
