#pragma once

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include <cmath>
#include <cstddef>
#include <span>

namespace oracle {

inline double chi_square_statistic(std::span<const std::size_t> counts, std::span<const double> probs) {
    std::size_t total = 0;
    for (auto c : counts) total += c;
    double chi = 0.0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (probs[i] <= 0.0) continue;
        const double e = probs[i] * static_cast<double>(total);
        chi += (static_cast<double>(counts[i]) - e) * (static_cast<double>(counts[i]) - e) / e;
    }
    return chi;
}

inline double chi_square_p_value(double statistic, double dof) {
    return boost::math::cdf(boost::math::complement(boost::math::chi_squared(dof), statistic));
}

/// |x - mu| <= z * sigma
inline bool within_sigma(double x, double mu, double sigma, double z = 3.0) { return std::fabs(x - mu) <= z * sigma; }

/// Is a at most b within z combined standard errors?
inline bool not_above(double a, double sem_a, double b, double sem_b, double z = 3.0) {
    return a <= b + z * std::sqrt(sem_a * sem_a + sem_b * sem_b);
}

} // namespace oracle

namespace oracle {

/// Upper quantile of the chi-square distribution, e.g. level 0.99.
inline double chi_square_quantile(double dof, double level) {
    return boost::math::quantile(boost::math::chi_squared(dof), level);
}

} // namespace oracle
