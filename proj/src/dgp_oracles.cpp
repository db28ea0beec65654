#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <utility>

#include <boost/math/constants/constants.hpp>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/binomial.hpp>

#include "dgp_detail.hpp"
#include "increff/errors.hpp"
#include "increff/intervention.hpp"
#include "increff/simulation.hpp"

namespace increff {

namespace {

using boost::math::constants::pi;

// 1ᵀX for X ~ N(0, I_2).
const double kSigmaZ = std::sqrt(2.0);

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// E|W| for W ~ N(c, σ²).
double mean_abs_normal(double c, double sigma) {
    return sigma * std::sqrt(2.0 / pi<double>()) * std::exp(-c * c / (2.0 * sigma * sigma)) +
           c * (1.0 - 2.0 * normal_cdf(-c / sigma));
}

std::optional<int> as_treatment(double v) {
    if (v != 0.0 && v != 1.0) throw InvariantViolation("oracle expected a binary treatment in the feature vector");
    return static_cast<int>(v);
}

/// Reads the flattened (H_t[, A_t]) layout produced by the simulators: d covariates per
/// stage, then A_1..A_{t−1}, no intermediate outcomes.
struct HistoryReader {
    const Eigen::VectorXd& f;
    int d;
    int t;

    HistoryReader(const Eigen::VectorXd& features, int d_, int t_, bool with_treatment)
        : f(features), d(d_), t(t_) {
        const int expected = d * t + (t - 1) + (with_treatment ? 1 : 0);
        if (f.size() != expected)
            throw InvariantViolation("oracle received " + std::to_string(f.size()) + " features at t=" +
                                     std::to_string(t) + ", expected " + std::to_string(expected) +
                                     " (histories with intermediate outcomes are not supported)");
    }
    double z(int s) const {
        if (s < 1) return 0.0;
        double v = 0.0;
        for (int j = 0; j < d; ++j) v += f[d * (s - 1) + j];
        return v;
    }
    std::optional<int> a(int s) const {
        if (s < 1) return std::nullopt;
        if (s == t) return as_treatment(f[f.size() - 1]);
        return as_treatment(f[d * t + (s - 1)]);
    }
    int a_or_zero(int s) const { return a(s).value_or(0); }
};

/// Exact outcome regressions of the dropout/observational models under the
/// incremental intervention. Only one-dimensional integrals are needed:
///   Q(L) = E[q(expit(Z + L))], Z ~ N(0, 2)
/// plus the closed form of E|N(c, 2)|.
class CovariateModelOracle {
public:
    double propensity(const OracleQuery& q) const {
        HistoryReader h(q.features, 2, q.t, false);
        return detail::dropout_propensity(h.z(q.t), h.a(q.t - 1), h.a(q.t - 2));
    }

    double outcome(const OracleQuery& q) {
        const int s = q.t;
        const int t = q.horizon;
        HistoryReader h(q.features, 2, s, true);
        const int a = *h.a(s);
        if (s == t) return detail::dropout_outcome_mean(a, h.a_or_zero(s - 1), h.z(s), h.z(s - 1));
        const auto& table = tables(q.delta, t);
        if (s == t - 1) {
            const double lag = detail::lag_shift(a, h.a(s - 1));
            return 10.0 + a + table.Q(lag) + mean_abs_normal(h.z(s), kSigmaZ);
        }
        return table.m.at(s - 1)[a][h.a_or_zero(s - 1)];
    }

private:
    struct Table {
        std::array<double, 5> q_by_lag{};  // L = −2..2
        std::vector<std::array<std::array<double, 2>, 2>> m;  // stages 1..t−2, [a_s][a_{s−1}]

        double Q(double lag) const { return q_by_lag.at(static_cast<std::size_t>(std::lround(lag) + 2)); }
    };

    const Table& tables(double delta, int horizon) {
        std::lock_guard<std::mutex> lock(mutex_);
        auto key = std::make_pair(delta, horizon);
        auto it = cache_.find(key);
        if (it != cache_.end()) return *it->second;
        auto tab = std::make_unique<Table>();
        for (int L = -2; L <= 2; ++L) {
            auto f = [&](double z) {
                const double dens = std::exp(-z * z / 4.0) / std::sqrt(4.0 * pi<double>());
                return incremental_propensity(expit(z + L), delta) * dens;
            };
            tab->q_by_lag[L + 2] = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
                f, -std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(), 15, 1e-13);
        }
        // lag seen by π_r when A_{r−1} = x and A_{r−2} = y (absent when r − 2 < 1)
        auto lag = [](int r, int x, int y) {
            return detail::lag_shift(x, r - 2 >= 1 ? std::optional<int>(y) : std::nullopt);
        };
        const int t = horizon;
        const double mean_abs_sum = mean_abs_normal(0.0, 2.0);  // E|Z_t + Z_{t−1}| unconditionally
        tab->m.resize(std::max(0, t - 2));
        for (int s = t - 2; s >= 1; --s) {
            for (int a = 0; a <= 1; ++a)
                for (int ap = 0; ap <= 1; ++ap) {
                    const double p1 = tab->Q(lag(s + 1, a, ap));
                    double v;
                    if (s == t - 2) {
                        v = 10.0 + mean_abs_sum + p1 * (1.0 + tab->Q(lag(t, 1, a))) + (1.0 - p1) * tab->Q(lag(t, 0, a));
                    } else {
                        v = p1 * tab->m[s][1][a] + (1.0 - p1) * tab->m[s][0][a];
                    }
                    tab->m[s - 1][a][ap] = v;
                }
        }
        auto& slot = cache_[key];
        slot = std::move(tab);
        return *slot;
    }

    std::mutex mutex_;
    std::map<std::pair<double, int>, std::unique_ptr<Table>> cache_;
};

/// P(R_{t+1} = 1 | R_t = 1, Ā_t) with the frailty C_0 ~ U[u_l, 5] integrated against its
/// posterior given survival through t.
double dropout_retention(const OracleQuery& q, double u_l) {
    HistoryReader h(q.features, 2, q.t, true);
    std::vector<double> cum(q.t);
    double s = 0;
    for (int j = 1; j <= q.t; ++j) {
        s += *h.a(j);
        cum[j - 1] = s;
    }
    if (u_l >= 5.0) return expit(5.0 + cum.back());
    auto survival = [&](double c) {
        double w = 1.0;
        for (int j = 0; j + 1 < q.t; ++j) w *= expit(c + cum[j]);
        return w;
    };
    using GL = boost::math::quadrature::gauss<double, 30>;
    const double num = GL::integrate([&](double c) { return expit(c + cum.back()) * survival(c); }, u_l, 5.0);
    const double den = GL::integrate(survival, u_l, 5.0);
    return num / den;
}

double trial_outcome(const OracleQuery& q, double p) {
    HistoryReader h(q.features, 0, q.t, true);
    int k = 0;
    for (int s = 1; s <= q.t; ++s) k += *h.a(s);
    const int remaining = q.horizon - q.t;
    const double qq = incremental_propensity(p, q.delta);
    double v = 0.0;
    for (int j = 0; j <= remaining; ++j) {
        const double w = boost::math::binomial_coefficient<double>(remaining, j) * std::pow(qq, j) *
                         std::pow(1.0 - qq, remaining - j);
        v += w * (10.0 + std::sqrt(static_cast<double>(k + j)));
    }
    return v;
}

} // namespace

NuisanceSpecs oracle_specs(const DgpConfig& cfg) {
    cfg.validate();
    NuisanceSpecs specs;
    switch (cfg.kind) {
    case DgpKind::trial: {
        const double p = cfg.p;
        specs.pi = LearnerSpec::from_oracle([p](const OracleQuery&) { return p; });
        specs.omega = LearnerSpec::from_oracle([](const OracleQuery&) { return 1.0; });
        specs.m = LearnerSpec::from_oracle([p](const OracleQuery& q) { return trial_outcome(q, p); });
        break;
    }
    case DgpKind::dropout:
    case DgpKind::observational: {
        auto model = std::make_shared<CovariateModelOracle>();
        specs.pi = LearnerSpec::from_oracle([model](const OracleQuery& q) { return model->propensity(q); });
        specs.m = LearnerSpec::from_oracle([model](const OracleQuery& q) { return model->outcome(q); });
        if (cfg.kind == DgpKind::dropout) {
            const double u_l = cfg.u_l;
            specs.omega = LearnerSpec::from_oracle([u_l](const OracleQuery& q) { return dropout_retention(q, u_l); });
        } else {
            specs.omega = LearnerSpec::from_oracle([](const OracleQuery&) { return 1.0; });
        }
        break;
    }
    }
    return specs;
}

} // namespace increff
