#pragma once

// Watermarked conditional Q*_{X|Z} as the solution of an optimal-transport
// problem between the token distribution (rows, restricted to its support)
// and the uniform distribution over the r key-indexed channel inputs
// (columns), with angular distance as the ground cost.

#include "arcmark/circle.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace arcmark {

class TokenDistribution {
public:
    /// Entries must be finite, non-negative and sum to 1 within 1e-9; the
    /// stored vector is rescaled by its sum.
    explicit TokenDistribution(std::vector<double> probs);

    static TokenDistribution point_mass(std::uint32_t N, TokenId token);
    static TokenDistribution uniform(std::uint32_t N);
    /// Uniform on {i, j}, i != j.
    static TokenDistribution two_point(std::uint32_t N, TokenId i, TokenId j);

    std::uint32_t size() const { return static_cast<std::uint32_t>(probs_.size()); }
    double operator[](std::size_t i) const { return probs_[i]; }
    std::span<const double> probs() const { return probs_; }
    /// Token ids with strictly positive mass, ascending.
    const std::vector<TokenId>& support() const { return support_; }
    /// Shannon entropy in bits.
    double entropy_bits() const;
    bool is_two_point_uniform() const;

private:
    std::vector<double> probs_;
    std::vector<TokenId> support_;
};

struct CostMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> costs; ///< row-major rows x cols, entries in [0, pi]
    std::vector<TokenId> row_tokens;

    double operator()(std::size_t i, std::size_t j) const { return costs[i * cols + j]; }
    double mean() const;
};

struct SolverConfig {
    /// Entropic regularisation as a fraction of the mean cost.
    double epsilon = 0.05;
    int max_iters = 2000;
    /// L1 tolerance on the row-marginal residual.
    double tolerance = 1e-8;
    /// When epsilon is below this fraction of the mean cost, the solve is
    /// annealed from here down to epsilon, halving at each stage.
    double scaling_start = 0.05;
    /// Over-relaxation factor in [1, 2); 1 is plain Sinkhorn.  Falls back to
    /// plain updates if the residual stops shrinking.
    double relaxation = 1.7;

    void validate() const;
};

void to_json(nlohmann::json& j, const SolverConfig& cfg);
void from_json(const nlohmann::json& j, SolverConfig& cfg);

struct TransportPlan {
    std::uint32_t vocab_size = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> joint; ///< row-major rows x cols
    std::vector<TokenId> row_tokens;
    int iterations = 0;
    /// Row-marginal L1 residual of the Sinkhorn iterate before rounding.
    double residual_before_rounding = 0.0;

    double operator()(std::size_t i, std::size_t j) const { return joint[i * cols + j]; }
    double row_sum(std::size_t i) const;
    double col_sum(std::size_t j) const;
    double cost(const CostMatrix& c) const;
};

/// costs[i][j] = d(2*pi*perm(token_i)/N, 2*pi*c/p + 2*pi*j/r + phi) over supp(Q).
CostMatrix build_cost(const TokenDistribution& q, std::uint32_t symbol, Permutation perm,
                      const CircleParams& params);

/// Log-stabilised Sinkhorn followed by rounding onto the exact marginals
/// (row sums = Q on its support, column sums = 1/r).
TransportPlan solve_plan(const TokenDistribution& q, const CostMatrix& cost, const SolverConfig& cfg = {});

/// Closed-form plan for Q uniform on two tokens: each column sends all of its
/// mass to the strictly closer token.  Throws TieError on an equidistant
/// column and ParameterError if the rule does not split the columns evenly.
TransportPlan solve_plan_twopoint(const TokenDistribution& q, std::uint32_t symbol, Permutation perm,
                                  const CircleParams& params);

/// Which of the two angles is strictly closer to z: 0 for `a`, 1 for `b`.
/// Throws TieError when the distances agree within kAngleTolerance.
int closer_of(Angle a, Angle b, Angle z);

/// Q*_{X | Z = column j} = r * joint[., j], expanded to the full vocabulary.
TokenDistribution conditional(const TransportPlan& plan, std::size_t column);

/// Inverse-CDF draw from column `column` of the plan using u in [0, 1).
TokenId sample_column(const TransportPlan& plan, std::size_t column, double u);

/// (1/r) * sum_j conditional(plan, j), i.e. the token marginal of the plan.
std::vector<double> mixture_over_keys(const TransportPlan& plan);

} // namespace arcmark
