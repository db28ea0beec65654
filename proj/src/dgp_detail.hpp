#pragma once

#include <cmath>
#include <optional>

#include "increff/learners.hpp"

namespace increff::detail {

/// Lagged treatment shift 2 Σ_{s=t−2}^{t−1}(A_s − ½); absent lags (s ≤ 0) contribute 0.
inline double lag_shift(std::optional<int> a_prev1, std::optional<int> a_prev2) {
    double v = 0.0;
    if (a_prev1) v += 2.0 * (*a_prev1 - 0.5);
    if (a_prev2) v += 2.0 * (*a_prev2 - 0.5);
    return v;
}

inline double dropout_propensity(double z, std::optional<int> a_prev1, std::optional<int> a_prev2) {
    return expit(z + lag_shift(a_prev1, a_prev2));
}

inline double dropout_outcome_mean(int a, int a_prev, double z, double z_prev) {
    return 10.0 + a + a_prev + std::abs(z + z_prev);
}

} // namespace increff::detail
