#pragma once

// Tokens, codeword symbols and keys all live on the unit circle:
//   token i    -> 2*pi*perm(i)/N
//   channel in -> (2*pi*c/p + 2*pi*v/r + phi) mod 2*pi

#include <cstdint>
#include <numbers>
#include <span>

namespace arcmark {

using TokenId = std::uint32_t;

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
/// Angles closer than this are treated as equal.
inline constexpr double kAngleTolerance = 1e-9;

/// An angle in radians, always reduced to [0, 2*pi).
class Angle {
public:
    constexpr Angle() = default;
    explicit Angle(double radians);

    double radians() const { return value_; }

    /// Angle of index/denominator of a full turn, computed from the reduced integer ratio.
    static Angle from_grid(std::uint64_t index, std::uint64_t denominator);

private:
    double value_ = 0.0;
};

struct CircleParams {
    std::uint32_t N = 2;  ///< vocabulary size
    std::uint32_t p = 2;  ///< symbol alphabet size
    std::uint32_t r = 1;  ///< key alphabet size
    double phi = 0.0;     ///< fixed angular offset

    void validate() const;
    /// p = r = N, phi = pi/(2N).
    static CircleParams theorem2(std::uint32_t N);
};

/// perm[i] is the circle position of token i.
using Permutation = std::span<const std::uint32_t>;

Angle token_angle(TokenId token, Permutation perm, const CircleParams& params);
Angle channel_input(std::uint32_t symbol, std::uint32_t key, const CircleParams& params);
/// Angle of the symbol alone: 2*pi*c/p + phi.
Angle symbol_angle(std::uint32_t symbol, const CircleParams& params);
/// min(|a-b|, 2*pi - |a-b|), in [0, pi].
double angular_distance(Angle a, Angle b);

} // namespace arcmark
