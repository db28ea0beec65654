#pragma once

#include <string>
#include <vector>

namespace increff {

/// q = δπ / (δπ + 1 − π): the propensity after multiplying the odds of treatment by δ.
double incremental_propensity(double pi, double delta);

/// (δa + 1 − a) / (δπ + 1 − π), the likelihood ratio of the shifted treatment law.
double density_ratio(int a, double pi, double delta);

enum class Spacing { log, linear };

struct DeltaGrid {
    std::vector<double> values;
    Spacing spacing = Spacing::log;

    std::size_t size() const noexcept { return values.size(); }
    double operator[](std::size_t j) const { return values[j]; }
};

/// `count` points on [lo, hi] with both endpoints exact.
DeltaGrid make_grid(double lo, double hi, int count, Spacing spacing = Spacing::log);

/// Explicit values; must be positive, finite and strictly increasing.
DeltaGrid grid_from_values(std::vector<double> values);

/// 25 log-spaced values on [0.1, 5].
DeltaGrid default_grid();

std::string to_string(Spacing s);
Spacing parse_spacing(const std::string& s);

} // namespace increff
