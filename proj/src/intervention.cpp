#include "increff/intervention.hpp"

#include <cmath>

#include "increff/errors.hpp"

namespace increff {

namespace {

void check_args(double pi, double delta) {
    if (!(delta > 0.0) || !std::isfinite(delta))
        throw DomainError("delta must be a positive finite number, got " + std::to_string(delta));
    if (!(pi >= 0.0 && pi <= 1.0)) throw DomainError("propensity must lie in [0, 1], got " + std::to_string(pi));
}

} // namespace

double incremental_propensity(double pi, double delta) {
    check_args(pi, delta);
    return delta * pi / (delta * pi + 1.0 - pi);
}

double density_ratio(int a, double pi, double delta) {
    check_args(pi, delta);
    if (a != 0 && a != 1) throw DomainError("treatment must be 0 or 1");
    return (a ? delta : 1.0) / (delta * pi + 1.0 - pi);
}

DeltaGrid make_grid(double lo, double hi, int count, Spacing spacing) {
    if (!(lo > 0.0) || !std::isfinite(hi) || lo > hi)
        throw ConfigError("delta range must satisfy 0 < lo <= hi < inf");
    if (count < 1) throw ConfigError("delta grid needs at least one point");
    if (count > 1 && lo == hi) throw ConfigError("delta grid with several points needs lo < hi");
    DeltaGrid g;
    g.spacing = spacing;
    g.values.resize(count);
    if (count == 1) {
        g.values[0] = lo;
        return g;
    }
    const double a = spacing == Spacing::log ? std::log(lo) : lo;
    const double b = spacing == Spacing::log ? std::log(hi) : hi;
    for (int j = 0; j < count; ++j) {
        const double v = a + (b - a) * j / (count - 1);
        g.values[j] = spacing == Spacing::log ? std::exp(v) : v;
    }
    g.values.front() = lo;
    g.values.back() = hi;
    return g;
}

DeltaGrid grid_from_values(std::vector<double> values) {
    if (values.empty()) throw ConfigError("delta grid is empty");
    for (std::size_t j = 0; j < values.size(); ++j) {
        if (!(values[j] > 0.0) || !std::isfinite(values[j]))
            throw ConfigError("delta values must be positive and finite");
        if (j > 0 && !(values[j] > values[j - 1])) throw ConfigError("delta values must be strictly increasing");
    }
    DeltaGrid g;
    g.values = std::move(values);
    return g;
}

DeltaGrid default_grid() { return make_grid(0.1, 5.0, 25, Spacing::log); }

std::string to_string(Spacing s) { return s == Spacing::log ? "log" : "linear"; }

Spacing parse_spacing(const std::string& s) {
    if (s == "log") return Spacing::log;
    if (s == "linear") return Spacing::linear;
    throw ConfigError("unknown grid spacing '" + s + "' (expected log or linear)");
}

} // namespace increff
