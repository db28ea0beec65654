#include <doctest.h>

#include <cmath>

#include "increff/efficiency.hpp"
#include "increff/errors.hpp"

using namespace increff;

namespace {

double choose(int n, int k) {
    double c = 1;
    for (int i = 1; i <= k; ++i) c = c * (n - k + i) / i;
    return c;
}

// Independent binomial-sum variance of the incremental single-draw estimator.
double inc_variance_reference(const MomentSpec& s) {
    const double den = s.delta * s.p + 1 - s.p;
    double m1 = 0, m2 = 0;
    for (int k = 0; k <= s.T; ++k) {
        const double prob = choose(s.T, k) * std::pow(s.p, k) * std::pow(1 - s.p, s.T - k);
        const double w = std::pow(s.delta, k) / std::pow(den, s.T);
        m1 += prob * w * s.mean_by_count(k);
        m2 += prob * w * w * s.second_by_count(k);
    }
    return m2 - m1 * m1;
}

MomentSpec as_sequences(const MomentSpec& s) {
    MomentSpec out = s;
    auto mean = s.mean_by_count;
    auto second = s.second_by_count;
    auto count = [](const std::vector<int>& a) {
        int k = 0;
        for (int v : a) k += v;
        return k;
    };
    out.mean = [mean, count](const std::vector<int>& a) { return mean(count(a)); };
    out.second_moment = [second, count](const std::vector<int>& a) { return second(count(a)); };
    out.mean_by_count = nullptr;
    out.second_by_count = nullptr;
    return out;
}

DiscreteOutcome binary_outcome(double base, double slope) {
    return [=](const std::vector<int>& a) {
        double k = 0;
        for (int v : a) k += v;
        const double p1 = std::min(0.95, base + slope * k);
        return std::vector<std::pair<double, double>>{{0.0, 1 - p1}, {1.0, p1}};
    };
}

} // namespace

TEST_CASE("bound base factor") {
    CHECK(re_bounds(trial_moments(0.5, 1.0, 3), Variant::always_treated).base == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(re_bounds(trial_moments(0.5, 1.0, 3), Variant::always_treated).lower == doctest::Approx(0.0));
    CHECK(re_bounds(trial_moments(0.5, 2.0, 1), Variant::always_treated).base ==
          doctest::Approx(1.25 / 2.25).epsilon(1e-15));
    for (double p = 0.05; p < 1.0; p += 0.05)
        for (double delta : {1.01, 1.5, 2.0, 5.0, 10.0, 100.0}) {
            const double b = re_bounds(trial_moments(p, delta, 1), Variant::always_treated).base;
            CHECK(b > 0.0);
            CHECK(b < 1.0);
        }
}

TEST_CASE("bound constant below its floor is rejected") {
    const auto spec = trial_moments(0.5, 2.0, 2);
    const auto floor = re_bounds(spec, Variant::always_treated).c_floor;
    CHECK(re_bounds(spec, Variant::always_treated).c == doctest::Approx(1.001 * floor).epsilon(1e-15));
    CHECK_THROWS_AS(re_bounds(spec, Variant::always_treated, 0.99 * floor), PreconditionError);
    const auto b = re_bounds(spec, Variant::always_treated, 2 * floor);
    CHECK(b.lower <= b.upper);
}

TEST_CASE("first negative horizon of the efficiency bound") {
    CHECK(tmin_first_negative(2.5, 0.5, 0.05) == 7);
    CHECK(tmin_first_negative(5.0, 0.5, 0.05) == 10);
    const auto r = tmin_report(2.5, 0.5, 0.05);
    CHECK(r.t_min == 6);
    CHECK(tmin_report(5.0, 0.5, 0.05).t_min == 9);
    CHECK(tmin_first_negative(50.0, 0.5, 1.0) == 4);
    CHECK(tmin_first_negative(50.0, 0.5, 1.0) < tmin_first_negative(50.0, 0.5, 0.05));
    CHECK_THROWS_AS(tmin_first_negative(0.5, 0.5, 0.05), PreconditionError);
}

TEST_CASE("property: the horizon scan agrees with direct evaluation") {
    for (double delta : {1.2, 2.0, 3.0, 7.5})
        for (double p : {0.2, 0.5, 0.8})
            for (double c1 : {0.01, 0.1, 0.5, 1.0}) {
                auto f = [&](int T) {
                    const double b = (delta * delta * p + 1 - p) / std::pow(delta * p + 1 - p, 2);
                    return std::pow(b, T) - c1 / std::pow(p, T) + 2;
                };
                const int T = tmin_first_negative(delta, p, c1);
                CHECK(f(T) < 0);
                for (int s = 1; s < T; ++s) CHECK(f(s) >= 0);
            }
}

TEST_CASE("regime weights") {
    CHECK(regime_weight({1, 1}, 2.0, 0.5) == doctest::Approx(std::pow(1 / 2.25, 2)).epsilon(1e-14));
    CHECK(regime_weight({0, 0}, 2.0, 0.5) == doctest::Approx(std::pow(0.25 / 2.25, 2)).epsilon(1e-14));
    CHECK(regime_weight({1}, 2.0, 0.5) + regime_weight({0}, 2.0, 0.5) == doctest::Approx(1.25 / 2.25).epsilon(1e-14));
}

TEST_CASE("property: regime weights sum to the closed form") {
    for (int T = 1; T <= 12; ++T)
        for (double delta : {0.3, 1.0, 2.0, 5.0})
            for (double p : {0.3, 0.5, 0.7}) {
                double total = 0;
                for (unsigned long mask = 0; mask < (1UL << T); ++mask) {
                    std::vector<int> a(T);
                    for (int t = 0; t < T; ++t) a[t] = (mask >> t) & 1;
                    total += regime_weight(a, delta, p);
                }
                const double closed =
                    std::pow((delta * delta * p * p + (1 - p) * (1 - p)) / std::pow(delta * p + 1 - p, 2), T);
                CHECK(total == doctest::Approx(closed).epsilon(1e-12));
            }
}

TEST_CASE("exact variances") {
    MomentSpec one;
    one.p = 0.5;
    one.delta = 2.0;
    one.T = 1;
    one.b_u = 1;
    one.mean_by_count = [](int) { return 1.0; };
    one.second_by_count = [](int) { return 1.0; };
    CHECK(exact_variance_oracle(one, SingleDrawEstimator::at) == doctest::Approx(1.0).epsilon(1e-15));

    for (int T = 1; T <= 8; ++T) {
        const auto s = trial_moments(0.5, 1.0, T);
        const double ey = s.mean_by_count(0);
        // δ = 1: all weights are one, so the variance is Var(Y) of one draw from the observed law
        double m1 = 0, m2 = 0;
        for (int k = 0; k <= T; ++k) {
            const double pr = choose(T, k) * std::pow(0.5, T);
            m1 += pr * s.mean_by_count(k);
            m2 += pr * s.second_by_count(k);
        }
        CHECK(exact_variance_oracle(s, SingleDrawEstimator::inc) == doctest::Approx(m2 - m1 * m1).epsilon(1e-12));
        (void)ey;
    }
}

TEST_CASE("property: exact variances match independent sums and full enumeration") {
    for (int T = 1; T <= 12; ++T)
        for (double delta : {0.5, 2.0, 5.0})
            for (double p : {0.3, 0.5}) {
                const auto s = trial_moments(p, delta, T);
                const double at = exact_variance_oracle(s, SingleDrawEstimator::at);
                const double e1 = s.mean_by_count(T), e2 = s.second_by_count(T);
                CHECK(at == doctest::Approx(std::pow(1 / p, T) * e2 - e1 * e1).epsilon(1e-12));
                const double nt = exact_variance_oracle(s, SingleDrawEstimator::nt);
                CHECK(nt == doctest::Approx(std::pow(1 / (1 - p), T) * s.second_by_count(0) -
                                            std::pow(s.mean_by_count(0), 2))
                                 .epsilon(1e-12));
                const double inc = exact_variance_oracle(s, SingleDrawEstimator::inc);
                CHECK(inc == doctest::Approx(inc_variance_reference(s)).epsilon(1e-10));
                const auto seq = as_sequences(s);
                CHECK(exact_variance_oracle(seq, SingleDrawEstimator::inc) == doctest::Approx(inc).epsilon(1e-10));
                CHECK(exact_variance_oracle(seq, SingleDrawEstimator::at) == doctest::Approx(at).epsilon(1e-10));
            }
}

TEST_CASE("enumeration is refused for long horizons without exchangeability") {
    const auto seq = as_sequences(trial_moments(0.5, 2.0, 21));
    CHECK_THROWS_AS(exact_variance_oracle(seq, SingleDrawEstimator::inc), PreconditionError);
}

TEST_CASE("variance decomposition examples") {
    CHECK(decomposition_check(binary_outcome(0.3, 0.2), 0.5, 2.0, 1) < 1e-10);
    CHECK(decomposition_check(binary_outcome(0.3, 0.2), 0.5, 5.0, 3) < 1e-10);
    CHECK(decomposition_check(binary_outcome(0.1, 0.1), 0.5, 1.0, 2) < 1e-10);
    CHECK_THROWS_AS(decomposition_check(binary_outcome(0.1, 0.1), 0.5, 1.0, 5), PreconditionError);
}

TEST_CASE("efficiency curve shape") {
    auto moments = [](int T) { return trial_moments(0.5, 5.0, T); };
    const auto rep = re_curve(moments, 12, Variant::always_treated);
    REQUIRE(rep.rows.size() == 12);
    for (std::size_t i = 1; i < rep.rows.size(); ++i) CHECK(rep.rows[i].exact_ratio < rep.rows[i - 1].exact_ratio);
    REQUIRE(rep.crossing_T.has_value());
    REQUIRE(rep.tmin.has_value());
    CHECK(*rep.crossing_T <= rep.tmin->first_negative);
    for (const auto& r : rep.rows) CHECK(r.lower <= r.upper);
}
