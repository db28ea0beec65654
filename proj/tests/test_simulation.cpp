#include <doctest.h>

#include <cmath>
#include <sstream>

#include <boost/math/constants/constants.hpp>

#include "increff/errors.hpp"
#include "increff/rng.hpp"
#include "increff/simulation.hpp"

using namespace increff;

namespace {

DgpConfig config(DgpKind kind, std::size_t n, int T, std::uint64_t seed, double u_l = 1.0) {
    DgpConfig c;
    c.kind = kind;
    c.n = n;
    c.T = T;
    c.seed = seed;
    c.u_l = u_l;
    return c;
}

std::string csv(const PanelDataset& ds) {
    std::ostringstream out;
    write_long_csv(ds, out);
    return out.str();
}

} // namespace

TEST_CASE("simulated panels satisfy the panel invariants") {
    for (auto kind : {DgpKind::dropout, DgpKind::trial, DgpKind::observational})
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const auto ds = simulate(config(kind, 200, 1 + static_cast<int>(seed) * 3, seed));
            CHECK(validate_monotonicity(ds).ok());
            std::istringstream in(csv(ds));
            CHECK(read_long_csv(in) == ds);
        }
}

TEST_CASE("same seed gives byte-identical output, different seeds differ") {
    const auto a = csv(simulate(config(DgpKind::dropout, 300, 6, 7)));
    const auto b = csv(simulate(config(DgpKind::dropout, 300, 6, 7)));
    const auto c = csv(simulate(config(DgpKind::dropout, 300, 6, 8)));
    CHECK(a == b);
    CHECK(a != c);
}

TEST_CASE("heavy dropout rate at fifty stages") {
    const double f = dropout_fraction(simulate(config(DgpKind::dropout, 5000, 50, 7, 1.0)));
    CHECK(f >= 0.43);
    CHECK(f <= 0.46);
}

TEST_CASE("light dropout rate at fifty stages") {
    const double f = dropout_fraction(simulate(config(DgpKind::dropout, 5000, 50, 7, 5.0)));
    CHECK(f >= 0.04);
    CHECK(f <= 0.06);
}

TEST_CASE("trial arms are balanced and never drop out") {
    const auto ds = simulate(config(DgpKind::trial, 5000, 4, 1));
    CHECK(dropout_fraction(ds) == 0.0);
    for (int t = 1; t <= 4; ++t) {
        double treated = 0;
        for (const auto& tr : ds.trajectories()) treated += tr.a(t);
        CHECK(std::abs(treated / 5000 - 0.5) < 0.02);
    }
}

TEST_CASE("truncated normal variance against quadrature") {
    // midpoint rule on [-2, 2]
    const int steps = 200000;
    double mass = 0, second = 0;
    for (int i = 0; i < steps; ++i) {
        const double x = -2.0 + (i + 0.5) * 4.0 / steps;
        const double f = std::exp(-0.5 * x * x);
        mass += f;
        second += x * x * f;
    }
    CHECK(truncated_normal_variance() == doctest::Approx(second / mass).epsilon(1e-9));
    CHECK(truncated_normal_variance() == doctest::Approx(0.7737).epsilon(1e-4));
}

TEST_CASE("truncated normal draws") {
    auto rng = make_rng(5);
    const int m = 100000;
    double sum = 0, sum2 = 0;
    for (int i = 0; i < m; ++i) {
        const double x = truncated_normal(rng, 3.0);
        CHECK(x >= 1.0);
        CHECK(x <= 5.0);
        sum += x;
        sum2 += x * x;
    }
    const double mean = sum / m;
    const double var = sum2 / m - mean * mean;
    CHECK(std::abs(mean - 3.0) < 3 * std::sqrt(truncated_normal_variance() / m));
    CHECK(var == doctest::Approx(truncated_normal_variance()).epsilon(0.02));
}

TEST_CASE("truth for the trial under a very large shift") {
    const auto truth = true_psi_oracle(config(DgpKind::trial, 10, 4, 0), grid_from_values({1e6}), 4, 200000, 3);
    CHECK(std::abs(truth.psi[0] - 12.0) <= 3 * truth.se[0]);
}

TEST_CASE("truth without a shift is the observational mean") {
    const auto cfg = config(DgpKind::observational, 200000, 3, 17);
    const auto truth = true_psi_oracle(cfg, grid_from_values({1.0}), 3, 200000, 4);
    const auto ds = simulate(cfg);
    double s = 0, s2 = 0;
    for (const auto& tr : ds.trajectories()) {
        s += tr.y(3);
        s2 += tr.y(3) * tr.y(3);
    }
    const double n = static_cast<double>(ds.n());
    const double mean = s / n;
    const double se = std::sqrt((s2 / n - mean * mean) / n);
    CHECK(std::abs(truth.psi[0] - mean) <= 3 * std::hypot(se, truth.se[0]));
}

TEST_CASE("trial truth increases with the shift") {
    const auto truth =
        true_psi_oracle(config(DgpKind::trial, 10, 4, 0), grid_from_values({0.1, 0.5, 1.0, 2.0, 5.0}), 4, 200000, 6);
    for (std::size_t j = 1; j < truth.psi.size(); ++j) CHECK(truth.psi[j] > truth.psi[j - 1]);
}

TEST_CASE("truth is reproducible across thread counts") {
    const auto cfg = config(DgpKind::dropout, 10, 5, 0);
    const auto a = true_psi_oracle(cfg, make_grid(0.2, 3, 4), 5, 20000, 9, 1);
    const auto b = true_psi_oracle(cfg, make_grid(0.2, 3, 4), 5, 20000, 9, 3);
    CHECK(a.psi == b.psi);
}

TEST_CASE("normalized error") {
    Eigen::MatrixXd est(2, 2);
    est << 1, 2, 1, 2;
    CHECK(normalized_rmse(est, {1, 2}, 1.5) == 0.0);
    Eigen::MatrixXd one(1, 1);
    one << 1.1;
    CHECK(normalized_rmse(one, {1.0}, 1.0) == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(normalized_rmse(one, {1.0}, 1.0, true) == doctest::Approx(0.1).epsilon(1e-12));

    auto rng = make_rng(1);
    for (int rep = 0; rep < 20; ++rep) {
        Eigen::MatrixXd e(3, 4);
        std::vector<double> truth(4);
        for (int d = 0; d < 4; ++d) {
            truth[d] = 1 + uniform01(rng);
            for (int s = 0; s < 3; ++s) e(s, d) = truth[d] + uniform01(rng) - 0.5;
        }
        const double c = 0.1 + 10 * uniform01(rng);
        std::vector<double> scaled = truth;
        for (auto& v : scaled) v *= c;
        CHECK(normalized_rmse(e * c, scaled, 1.3 * c) == doctest::Approx(normalized_rmse(e, truth, 1.3)).epsilon(1e-12));
    }
}

TEST_CASE("single replicate benchmark completes") {
    BenchmarkConfig cfg;
    cfg.dgp = config(DgpKind::dropout, 200, 3, 0);
    cfg.S = 1;
    cfg.grid = make_grid(0.5, 2.0, 3);
    cfg.seed = 4;
    cfg.truth_m = 5000;
    const auto res = run_benchmark(cfg);
    for (const auto& name : res.estimators) {
        CHECK(std::isfinite(res.rmse.at(name)));
        CHECK(res.rmse.at(name) >= 0);
    }
    CHECK(res.dropout_pct >= 0);
    CHECK(res.dropout_pct <= 100);
}

TEST_CASE("relative efficiency Monte Carlo without a shift") {
    const auto cfg = config(DgpKind::trial, 250, 4, 0);
    const auto mc = relative_efficiency_mc(cfg, 1.0, 1, 3, 50, 2);
    for (const auto& pt : mc.points) {
        CHECK_FALSE(pt.excluded);
        CHECK(pt.ratio_at == doctest::Approx(pt.var_at / pt.var_inc));
        CHECK(pt.ratio_at > 1.0);
    }
}

TEST_CASE("relative efficiency Monte Carlo stays above the analytic bound") {
    const auto cfg = config(DgpKind::trial, 250, 20, 0);
    const auto mc = relative_efficiency_mc(cfg, 5.0, 1, 20, 100, 11);
    int above = 0;
    for (const auto& pt : mc.points) above += pt.ratio_at >= pt.lower_at;
    CHECK(above >= 19);
}

TEST_CASE("invalid configurations") {
    auto c = config(DgpKind::dropout, 10, 3, 0, 6.0);
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = config(DgpKind::trial, 10, 0, 0);
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = config(DgpKind::trial, 10, 3, 0);
    c.p = 1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}
