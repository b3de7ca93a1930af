#include "arcmark/transport.hpp"

#include "arcmark/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>

namespace arcmark {

// ---------------------------------------------------------------------------
// TokenDistribution

TokenDistribution::TokenDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.empty()) throw ParameterError("distribution: empty probability vector");
    double sum = 0.0;
    for (double x : probs_) {
        if (!std::isfinite(x) || x < 0.0) throw ParameterError("distribution: entries must be finite and >= 0");
        sum += x;
    }
    if (std::fabs(sum - 1.0) > 1e-9)
        throw ParameterError("distribution: entries sum to " + std::to_string(sum) + ", expected 1");
    for (std::size_t i = 0; i < probs_.size(); ++i) {
        probs_[i] /= sum;
        if (probs_[i] > 0.0) support_.push_back(static_cast<TokenId>(i));
    }
}

TokenDistribution TokenDistribution::point_mass(std::uint32_t N, TokenId token) {
    if (token >= N) throw ParameterError("point_mass: token outside vocabulary");
    std::vector<double> p(N, 0.0);
    p[token] = 1.0;
    return TokenDistribution(std::move(p));
}

TokenDistribution TokenDistribution::uniform(std::uint32_t N) {
    return TokenDistribution(std::vector<double>(N, 1.0 / N));
}

TokenDistribution TokenDistribution::two_point(std::uint32_t N, TokenId i, TokenId j) {
    if (i == j || i >= N || j >= N) throw ParameterError("two_point: need two distinct tokens in the vocabulary");
    std::vector<double> p(N, 0.0);
    p[i] = 0.5;
    p[j] = 0.5;
    return TokenDistribution(std::move(p));
}

double TokenDistribution::entropy_bits() const {
    double h = 0.0;
    for (TokenId i : support_) h -= probs_[i] * std::log2(probs_[i]);
    return h;
}

bool TokenDistribution::is_two_point_uniform() const {
    return support_.size() == 2 && std::fabs(probs_[support_[0]] - 0.5) <= 1e-12 &&
           std::fabs(probs_[support_[1]] - 0.5) <= 1e-12;
}

// ---------------------------------------------------------------------------
// Cost, config, plan accessors

double CostMatrix::mean() const {
    if (costs.empty()) return 0.0;
    return std::accumulate(costs.begin(), costs.end(), 0.0) / static_cast<double>(costs.size());
}

void SolverConfig::validate() const {
    if (!(epsilon > 0.0)) throw ParameterError("solver: epsilon must be positive");
    if (max_iters < 1) throw ParameterError("solver: max_iters must be positive");
    if (!(tolerance > 0.0)) throw ParameterError("solver: tolerance must be positive");
    if (!(scaling_start > 0.0)) throw ParameterError("solver: scaling_start must be positive");
    if (!(relaxation >= 1.0 && relaxation < 2.0)) throw ParameterError("solver: relaxation must be in [1, 2)");
}

void to_json(nlohmann::json& j, const SolverConfig& cfg) {
    j = nlohmann::json{{"epsilon", cfg.epsilon},
                       {"max_iters", cfg.max_iters},
                       {"tolerance", cfg.tolerance},
                       {"scaling_start", cfg.scaling_start},
                       {"relaxation", cfg.relaxation}};
}

void from_json(const nlohmann::json& j, SolverConfig& cfg) {
    SolverConfig d;
    cfg.epsilon = j.value("epsilon", d.epsilon);
    cfg.max_iters = j.value("max_iters", d.max_iters);
    cfg.tolerance = j.value("tolerance", d.tolerance);
    cfg.scaling_start = j.value("scaling_start", d.scaling_start);
    cfg.relaxation = j.value("relaxation", d.relaxation);
}

double TransportPlan::row_sum(std::size_t i) const {
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += joint[i * cols + j];
    return s;
}

double TransportPlan::col_sum(std::size_t j) const {
    double s = 0.0;
    for (std::size_t i = 0; i < rows; ++i) s += joint[i * cols + j];
    return s;
}

double TransportPlan::cost(const CostMatrix& c) const {
    if (c.rows != rows || c.cols != cols) throw ParameterError("plan cost: shape mismatch");
    double s = 0.0;
    for (std::size_t k = 0; k < joint.size(); ++k) s += joint[k] * c.costs[k];
    return s;
}

CostMatrix build_cost(const TokenDistribution& q, std::uint32_t symbol, Permutation perm,
                      const CircleParams& params) {
    params.validate();
    if (q.support().empty()) throw ParameterError("build_cost: distribution has empty support");
    if (q.size() != params.N) throw ParameterError("build_cost: distribution size differs from N");
    if (perm.size() != params.N) throw ParameterError("build_cost: permutation size differs from N");
    if (symbol >= params.p) throw ParameterError("build_cost: symbol out of range");

    CostMatrix c;
    c.rows = q.support().size();
    c.cols = params.r;
    c.row_tokens = q.support();
    c.costs.resize(c.rows * c.cols);

    std::vector<Angle> z(params.r);
    const double base = kTwoPi * symbol / params.p + params.phi;
    for (std::uint32_t j = 0; j < params.r; ++j) z[j] = Angle(base + kTwoPi * j / params.r);

    for (std::size_t i = 0; i < c.rows; ++i) {
        const Angle a = token_angle(c.row_tokens[i], perm, params);
        for (std::size_t j = 0; j < c.cols; ++j) c.costs[i * c.cols + j] = angular_distance(a, z[j]);
    }
    return c;
}

// ---------------------------------------------------------------------------
// Sinkhorn

namespace {

TransportPlan product_plan(const TokenDistribution& q, const CostMatrix& cost) {
    TransportPlan plan;
    plan.vocab_size = q.size();
    plan.rows = cost.rows;
    plan.cols = cost.cols;
    plan.row_tokens = cost.row_tokens;
    plan.joint.resize(plan.rows * plan.cols);
    const double b = 1.0 / static_cast<double>(plan.cols);
    for (std::size_t i = 0; i < plan.rows; ++i)
        for (std::size_t j = 0; j < plan.cols; ++j) plan.joint[i * plan.cols + j] = q[plan.row_tokens[i]] * b;
    return plan;
}

double log_sum_exp(const double* x, std::size_t n, std::size_t stride) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n; ++k) m = std::max(m, x[k * stride]);
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) s += std::exp(x[k * stride] - m);
    return m + std::log(s);
}

// Dual potentials (f, g) with scalings (u, v) over the stabilised kernel
// K_ij = exp((f_i + g_j - C_ij) / eps).  The plan is u_i K_ij v_j.
class SinkhornState {
public:
    SinkhornState(std::span<const double> a, double b, const CostMatrix& cost)
        : a_(a), b_(b), cost_(cost), rows_(cost.rows), cols_(cost.cols), f_(rows_), g_(cols_, 0.0), u_(rows_, 1.0),
          v_(cols_, 1.0), kernel_(rows_ * cols_), kv_(rows_), ktu_(cols_) {
        for (std::size_t i = 0; i < rows_; ++i)
            f_[i] = *std::min_element(cost.costs.begin() + i * cols_, cost.costs.begin() + (i + 1) * cols_);
    }

    void set_epsilon(double eps) {
        eps_ = eps;
        rebuild_kernel();
    }

    // One (u, v) update, over-relaxed by omega.  Falls back to an exact
    // log-domain step when the stabilised kernel under- or overflows.
    void iterate(double omega = 1.0) {
        multiply_kernel();
        bool ok = true;
        for (std::size_t i = 0; i < rows_; ++i) {
            u_[i] = relax(u_[i], a_[i] / kv_[i], omega);
            ok = ok && std::isfinite(u_[i]) && u_[i] > 0.0;
        }
        if (ok) {
            multiply_kernel_transposed();
            for (std::size_t j = 0; j < cols_; ++j) {
                v_[j] = relax(v_[j], b_ / ktu_[j], omega);
                ok = ok && std::isfinite(v_[j]) && v_[j] > 0.0;
            }
        }
        if (!ok) {
            log_domain_step();
            return;
        }
        const double hi = std::exp(kAbsorbThreshold);
        const double lo = 1.0 / hi;
        bool spread = false;
        for (double x : u_) spread |= (x > hi) | (x < lo);
        for (double x : v_) spread |= (x > hi) | (x < lo);
        if (spread) absorb();
    }

    // L1 distance between the row marginal and a after one plain update,
    // which leaves the columns exact.
    double row_residual() {
        iterate();
        multiply_kernel();
        double res = 0.0;
        for (std::size_t i = 0; i < rows_; ++i) res += std::fabs(u_[i] * kv_[i] - a_[i]);
        return res;
    }

    double col_residual() {
        multiply_kernel_transposed();
        double res = 0.0;
        for (std::size_t j = 0; j < cols_; ++j) res += std::fabs(v_[j] * ktu_[j] - b_);
        return res;
    }

    void absorb() {
        for (std::size_t i = 0; i < rows_; ++i) f_[i] += eps_ * std::log(u_[i]);
        for (std::size_t j = 0; j < cols_; ++j) g_[j] += eps_ * std::log(v_[j]);
        std::fill(u_.begin(), u_.end(), 1.0);
        std::fill(v_.begin(), v_.end(), 1.0);
        rebuild_kernel();
    }

    std::vector<double> plan() const {
        std::vector<double> p(rows_ * cols_);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < cols_; ++j) p[i * cols_ + j] = u_[i] * kernel_[i * cols_ + j] * v_[j];
        return p;
    }

private:
    static constexpr double kAbsorbThreshold = 30.0;

    // First-order form of cur * (target / cur)^omega.  Far from the fixed
    // point the plain update is used.
    static double relax(double cur, double target, double omega) {
        const double ratio = target / cur;
        if (omega == 1.0 || !(ratio > 0.5 && ratio < 2.0)) return target;
        return target * (1.0 + (omega - 1.0) * (ratio - 1.0));
    }

    void rebuild_kernel() {
        const double inv = 1.0 / eps_;
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < cols_; ++j)
                kernel_[i * cols_ + j] = std::exp((f_[i] + g_[j] - cost_.costs[i * cols_ + j]) * inv);
    }

    void multiply_kernel() {
        for (std::size_t i = 0; i < rows_; ++i) {
            const double* k = kernel_.data() + i * cols_;
            const double* v = v_.data();
            // independent partial sums so the reduction pipelines
            double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
            std::size_t j = 0;
            for (; j + 8 <= cols_; j += 8)
                for (int l = 0; l < 8; ++l) acc[l] += k[j + l] * v[j + l];
            double s = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
            for (; j < cols_; ++j) s += k[j] * v[j];
            kv_[i] = s;
        }
    }

    void multiply_kernel_transposed() {
        std::fill(ktu_.begin(), ktu_.end(), 0.0);
        for (std::size_t i = 0; i < rows_; ++i) {
            const double* k = kernel_.data() + i * cols_;
            const double ui = u_[i];
            for (std::size_t j = 0; j < cols_; ++j) ktu_[j] += k[j] * ui;
        }
    }

    // Exact update of the potentials, used when the scaled kernel degenerates.
    void log_domain_step() {
        for (std::size_t i = 0; i < rows_; ++i)
            if (!(std::isfinite(u_[i]) && u_[i] > 0.0)) u_[i] = 1.0;
        for (std::size_t j = 0; j < cols_; ++j)
            if (!(std::isfinite(v_[j]) && v_[j] > 0.0)) v_[j] = 1.0;
        for (std::size_t i = 0; i < rows_; ++i) f_[i] += eps_ * std::log(u_[i]);
        for (std::size_t j = 0; j < cols_; ++j) g_[j] += eps_ * std::log(v_[j]);

        std::vector<double> buf(std::max(rows_, cols_));
        const double inv = 1.0 / eps_;
        for (std::size_t i = 0; i < rows_; ++i) {
            for (std::size_t j = 0; j < cols_; ++j) buf[j] = (g_[j] - cost_.costs[i * cols_ + j]) * inv;
            f_[i] = eps_ * std::log(a_[i]) - eps_ * log_sum_exp(buf.data(), cols_, 1);
        }
        for (std::size_t j = 0; j < cols_; ++j) {
            for (std::size_t i = 0; i < rows_; ++i) buf[i] = (f_[i] - cost_.costs[i * cols_ + j]) * inv;
            g_[j] = eps_ * std::log(b_) - eps_ * log_sum_exp(buf.data(), rows_, 1);
        }
        std::fill(u_.begin(), u_.end(), 1.0);
        std::fill(v_.begin(), v_.end(), 1.0);
        rebuild_kernel();
    }

    std::span<const double> a_;
    double b_;
    const CostMatrix& cost_;
    std::size_t rows_, cols_;
    double eps_ = 1.0;
    std::vector<double> f_, g_, u_, v_, kernel_, kv_, ktu_;
};

// Rounds an approximately feasible plan onto the exact marginals (a, b):
// scale down over-full rows, then over-full columns, then spread the missing
// mass as a rank-one correction.
void round_to_marginals(std::vector<double>& p, std::span<const double> a, double b, std::size_t rows,
                        std::size_t cols) {
    for (std::size_t i = 0; i < rows; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < cols; ++j) s += p[i * cols + j];
        if (s > a[i]) {
            const double x = a[i] / s;
            for (std::size_t j = 0; j < cols; ++j) p[i * cols + j] *= x;
        }
    }
    std::vector<double> col(cols, 0.0);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) col[j] += p[i * cols + j];
    for (std::size_t j = 0; j < cols; ++j) {
        if (col[j] > b) {
            const double y = b / col[j];
            for (std::size_t i = 0; i < rows; ++i) p[i * cols + j] *= y;
        }
    }
    std::vector<double> err_r(rows), err_c(cols);
    std::fill(col.begin(), col.end(), 0.0);
    for (std::size_t i = 0; i < rows; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            s += p[i * cols + j];
            col[j] += p[i * cols + j];
        }
        err_r[i] = std::max(0.0, a[i] - s);
    }
    double err_c_total = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
        err_c[j] = std::max(0.0, b - col[j]);
        err_c_total += err_c[j];
    }
    if (err_c_total <= 0.0) return;
    for (std::size_t i = 0; i < rows; ++i) {
        if (err_r[i] == 0.0) continue;
        const double w = err_r[i] / err_c_total;
        for (std::size_t j = 0; j < cols; ++j) p[i * cols + j] += w * err_c[j];
    }
}

} // namespace

TransportPlan solve_plan(const TokenDistribution& q, const CostMatrix& cost, const SolverConfig& cfg) {
    cfg.validate();
    if (cost.rows == 0 || cost.cols == 0) throw ParameterError("solve_plan: empty cost matrix");
    if (cost.row_tokens != q.support()) throw ParameterError("solve_plan: cost rows do not match supp(Q)");

    const double mean_cost = cost.mean();
    // A single row or column admits exactly one coupling; zero cost makes every coupling optimal.
    if (cost.rows == 1 || cost.cols == 1 || mean_cost <= 0.0) return product_plan(q, cost);

    std::vector<double> a(cost.rows);
    for (std::size_t i = 0; i < cost.rows; ++i) a[i] = q[cost.row_tokens[i]];
    const double b = 1.0 / static_cast<double>(cost.cols);

    const double eps_target = cfg.epsilon * mean_cost;
    std::vector<double> ladder{eps_target};
    for (double e = 2.0 * eps_target; e <= cfg.scaling_start * mean_cost * (1.0 + 1e-12); e *= 2.0)
        ladder.push_back(e);
    std::reverse(ladder.begin(), ladder.end());

    SinkhornState state(a, b, cost);
    int iterations = 0;
    double residual = std::numeric_limits<double>::infinity();
    constexpr int kCheckEvery = 10;
    for (std::size_t stage = 0; stage < ladder.size(); ++stage) {
        const bool last = stage + 1 == ladder.size();
        const double stage_tol = last ? cfg.tolerance : std::max(cfg.tolerance, 1e-5);
        state.set_epsilon(ladder[stage]);
        double omega = cfg.relaxation;
        double previous = std::numeric_limits<double>::infinity();
        for (int it = 1;; ++it) {
            state.iterate(omega);
            ++iterations;
            if (it % kCheckEvery == 0 || iterations >= cfg.max_iters) {
                residual = state.row_residual();
                ++iterations;
                if (residual <= stage_tol) break;
                if (residual >= previous) omega = 1.0;
                previous = residual;
            }
            if (iterations >= cfg.max_iters) {
                if (!last) break;
                const double col_res = state.col_residual();
                std::ostringstream msg;
                msg << "sinkhorn did not converge in " << iterations << " iterations (row residual " << residual
                    << ", column residual " << col_res << ")";
                throw SolverError(msg.str(), residual, col_res, iterations);
            }
        }
        if (last) break;
        state.absorb();
        if (iterations >= cfg.max_iters) {
            const double col_res = state.col_residual();
            throw SolverError("sinkhorn exhausted its iteration budget during epsilon scaling", residual, col_res,
                              iterations);
        }
    }

    TransportPlan plan;
    plan.vocab_size = q.size();
    plan.rows = cost.rows;
    plan.cols = cost.cols;
    plan.row_tokens = cost.row_tokens;
    plan.joint = state.plan();
    plan.iterations = iterations;
    plan.residual_before_rounding = residual;
    round_to_marginals(plan.joint, a, b, plan.rows, plan.cols);
    return plan;
}

// ---------------------------------------------------------------------------
// Two-point closed form

int closer_of(Angle a, Angle b, Angle z) {
    const double da = angular_distance(a, z);
    const double db = angular_distance(b, z);
    if (std::fabs(da - db) <= kAngleTolerance) {
        std::ostringstream msg;
        msg << "equidistant tokens: angles " << a.radians() << " and " << b.radians() << " are both " << da
            << " from z = " << z.radians();
        throw TieError(msg.str());
    }
    return da < db ? 0 : 1;
}

TransportPlan solve_plan_twopoint(const TokenDistribution& q, std::uint32_t symbol, Permutation perm,
                                  const CircleParams& params) {
    params.validate();
    if (!q.is_two_point_uniform()) throw ParameterError("solve_plan_twopoint: Q must be uniform on two tokens");
    if (perm.size() != params.N || q.size() != params.N)
        throw ParameterError("solve_plan_twopoint: size mismatch with N");
    if (symbol >= params.p) throw ParameterError("solve_plan_twopoint: symbol out of range");

    TransportPlan plan;
    plan.vocab_size = q.size();
    plan.rows = 2;
    plan.cols = params.r;
    plan.row_tokens = q.support();
    plan.joint.assign(2 * params.r, 0.0);

    const TokenId ti = plan.row_tokens[0];
    const TokenId tj = plan.row_tokens[1];
    const Angle ai = token_angle(ti, perm, params);
    const Angle aj = token_angle(tj, perm, params);
    const double base = kTwoPi * symbol / params.p + params.phi;
    const double mass = 1.0 / params.r;
    std::size_t to_first = 0;
    for (std::uint32_t col = 0; col < params.r; ++col) {
        const Angle z(base + kTwoPi * col / params.r);
        int winner;
        try {
            winner = closer_of(ai, aj, z);
        } catch (const TieError&) {
            throw TieError("two-point tie at column " + std::to_string(col) + " (z = " + std::to_string(z.radians()) +
                           ") between tokens " + std::to_string(ti) + " and " + std::to_string(tj));
        }
        plan.joint[static_cast<std::size_t>(winner) * params.r + col] = mass;
        if (winner == 0) ++to_first;
    }
    if (2 * to_first != params.r)
        throw ParameterError("solve_plan_twopoint: deterministic rule sends " + std::to_string(to_first) + " of " +
                             std::to_string(params.r) + " columns to token " + std::to_string(ti) +
                             ", which is not distortion-free");
    return plan;
}

// ---------------------------------------------------------------------------
// Extraction

TokenDistribution conditional(const TransportPlan& plan, std::size_t column) {
    if (column >= plan.cols) throw ParameterError("conditional: column out of range");
    std::vector<double> probs(plan.vocab_size, 0.0);
    const double scale = static_cast<double>(plan.cols);
    for (std::size_t i = 0; i < plan.rows; ++i) probs[plan.row_tokens[i]] = scale * plan(i, column);
    return TokenDistribution(std::move(probs));
}

TokenId sample_column(const TransportPlan& plan, std::size_t column, double u) {
    if (column >= plan.cols) throw ParameterError("sample_column: column out of range");
    double total = 0.0;
    for (std::size_t i = 0; i < plan.rows; ++i) total += plan(i, column);
    const double target = u * total;
    double acc = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < plan.rows; ++i) {
        const double w = plan(i, column);
        if (w <= 0.0) continue;
        last_positive = i;
        acc += w;
        if (target < acc) return plan.row_tokens[i];
    }
    return plan.row_tokens[last_positive];
}

std::vector<double> mixture_over_keys(const TransportPlan& plan) {
    std::vector<double> mix(plan.vocab_size, 0.0);
    const double r = static_cast<double>(plan.cols);
    for (std::size_t j = 0; j < plan.cols; ++j)
        for (std::size_t i = 0; i < plan.rows; ++i) mix[plan.row_tokens[i]] += (r * plan(i, j)) / r;
    return mix;
}

} // namespace arcmark
