#include "arcmark/circle.hpp"

#include "arcmark/error.hpp"

#include <cmath>
#include <string>

namespace arcmark {

Angle::Angle(double radians) {
    double v = std::fmod(radians, kTwoPi);
    if (v < 0.0) v += kTwoPi;
    // fmod of a value just below a multiple of 2*pi can round up to 2*pi
    if (v >= kTwoPi) v = 0.0;
    value_ = v;
}

Angle Angle::from_grid(std::uint64_t index, std::uint64_t denominator) {
    return Angle(kTwoPi * static_cast<double>(index % denominator) / static_cast<double>(denominator));
}

void CircleParams::validate() const {
    if (N < 2) throw ParameterError("circle: N must be at least 2");
    if (p < 2) throw ParameterError("circle: p must be at least 2");
    if (r < 1) throw ParameterError("circle: r must be at least 1");
    if (!std::isfinite(phi)) throw ParameterError("circle: phi must be finite");
}

CircleParams CircleParams::theorem2(std::uint32_t N) {
    return CircleParams{N, N, N, std::numbers::pi / (2.0 * N)};
}

Angle token_angle(TokenId token, Permutation perm, const CircleParams& params) {
    if (token >= params.N || token >= perm.size())
        throw ParameterError("token_angle: token " + std::to_string(token) + " outside vocabulary");
    return Angle::from_grid(perm[token], params.N);
}

Angle channel_input(std::uint32_t symbol, std::uint32_t key, const CircleParams& params) {
    if (symbol >= params.p) throw ParameterError("channel_input: symbol out of range");
    if (key >= params.r) throw ParameterError("channel_input: key out of range");
    return Angle(kTwoPi * symbol / params.p + kTwoPi * key / params.r + params.phi);
}

Angle symbol_angle(std::uint32_t symbol, const CircleParams& params) {
    if (symbol >= params.p) throw ParameterError("symbol_angle: symbol out of range");
    return Angle(kTwoPi * symbol / params.p + params.phi);
}

double angular_distance(Angle a, Angle b) {
    const double diff = std::fabs(a.radians() - b.radians());
    return std::fmin(diff, kTwoPi - diff);
}

} // namespace arcmark
