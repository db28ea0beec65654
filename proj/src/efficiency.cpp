#include "increff/efficiency.hpp"

#include <cmath>
#include <limits>

#include <boost/math/special_functions/binomial.hpp>

#include "increff/errors.hpp"
#include "increff/simulation.hpp"

namespace increff {

namespace {

std::vector<int> sequence_from_mask(unsigned long mask, int T) {
    std::vector<int> a(T);
    for (int t = 0; t < T; ++t) a[t] = static_cast<int>((mask >> t) & 1UL);
    return a;
}

int count_ones(const std::vector<int>& a) {
    int k = 0;
    for (int v : a) k += v;
    return k;
}

void check_p_delta(double p, double delta) {
    if (!(p > 0.0 && p < 1.0)) throw DomainError("p must lie in (0, 1)");
    if (!(delta > 0.0) || !std::isfinite(delta)) throw DomainError("delta must be positive and finite");
}

constexpr int kMaxEnumeration = 20;

} // namespace

double MomentSpec::mean_of(const std::vector<int>& a) const {
    if (mean) return mean(a);
    if (mean_by_count) return mean_by_count(count_ones(a));
    throw PreconditionError("moment specification has no mean provider");
}

double MomentSpec::second_of(const std::vector<int>& a) const {
    if (second_moment) return second_moment(a);
    if (second_by_count) return second_by_count(count_ones(a));
    throw PreconditionError("moment specification has no second-moment provider");
}

void MomentSpec::validate() const {
    check_p_delta(p, delta);
    if (T < 1) throw DomainError("T must be at least 1");
    if (!(b_u > 0.0)) throw DomainError("outcome bound must be positive");
    if (!(mean || mean_by_count) || !(second_moment || second_by_count))
        throw PreconditionError("moment specification needs mean and second-moment providers");
}

MomentSpec trial_moments(double p, double delta, int T) {
    MomentSpec s;
    s.p = p;
    s.delta = delta;
    s.T = T;
    s.b_u = 12.0 + std::sqrt(static_cast<double>(T));
    const double v = truncated_normal_variance();
    s.mean_by_count = [](int k) { return 10.0 + std::sqrt(static_cast<double>(k)); };
    s.second_by_count = [v](int k) {
        const double m = 10.0 + std::sqrt(static_cast<double>(k));
        return m * m + v;
    };
    s.validate();
    return s;
}

std::string to_string(Variant v) { return v == Variant::always_treated ? "always_treated" : "never_treated"; }

Variant parse_variant(const std::string& s) {
    if (s == "always_treated" || s == "at") return Variant::always_treated;
    if (s == "never_treated" || s == "nt") return Variant::never_treated;
    throw ConfigError("unknown variant '" + s + "' (expected always_treated or never_treated)");
}

ReBounds re_bounds(const MomentSpec& spec, Variant variant, std::optional<double> c) {
    spec.validate();
    const double p = spec.p, delta = spec.delta;
    const int T = spec.T;
    const bool at = variant == Variant::always_treated;
    const std::vector<int> ref(T, at ? 1 : 0);
    const double m1 = spec.mean_of(ref);
    const double m2 = spec.second_of(ref);
    if (!(m2 > 0.0)) throw PreconditionError("the reference counterfactual second moment must be positive");
    if (std::abs(m1) > spec.b_u || m2 > spec.b_u * spec.b_u)
        throw PreconditionError("counterfactual moments exceed the outcome bound");
    const double pr = at ? p : 1.0 - p;  // probability of following the reference regime at one stage
    const double den = delta * p + 1.0 - p;

    ReBounds b;
    b.base = at ? (delta * delta * p * p + p * (1.0 - p)) / (den * den)
                : (delta * delta * p * (1.0 - p) + (1.0 - p) * (1.0 - p)) / (den * den);
    b.C = spec.b_u * spec.b_u / m2;
    const double prT = std::pow(pr, T);
    b.c_floor = 1.0 / (1.0 - prT * m1 * m1 / m2);
    b.c = c.value_or(b.c_floor * 1.001);
    if (b.c < b.c_floor) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "c = %.17g is below its admissible floor %.17g", b.c, b.c_floor);
        throw PreconditionError(buf);
    }
    b.zeta = 1.0 + b.c * m1 * m1 * prT / m2;  // (1/pr)^T in the denominator
    const double baseT = std::pow(b.base, T);
    b.lower = b.C * (baseT - prT);
    b.upper = b.C * b.zeta * baseT;
    return b;
}

int tmin_first_negative(double delta, double p, double c1) {
    if (!(delta > 1.0)) throw PreconditionError("the scan needs delta > 1");
    if (!(p > 0.0 && p < 1.0)) throw PreconditionError("the scan needs p in (0, 1)");
    if (!(c1 > 0.0 && c1 <= 1.0)) throw PreconditionError("the scan needs c1 in (0, 1]");
    const double den = delta * p + 1.0 - p;
    const double log_base = std::log((delta * delta * p + 1.0 - p) / (den * den));
    const double log_c1 = std::log(c1);
    const double log_inv_p = -std::log(p);
    for (int T = 1; T <= 1000000; ++T) {
        // base^T + 2 < c1 / p^T, compared in log space
        const double a = T * log_base;
        const double hi = std::max(a, std::log(2.0));
        const double lhs = hi + std::log(std::exp(a - hi) + std::exp(std::log(2.0) - hi));
        const double rhs = log_c1 + T * log_inv_p;
        if (lhs < rhs) return T;
    }
    throw EstimationError("scan did not terminate before T = 1000000");
}

TminReport tmin_report(double delta, double p, double c1) {
    TminReport r;
    r.first_negative = tmin_first_negative(delta, p, c1);
    r.t_min = r.first_negative - 1;
    r.c1 = c1;
    return r;
}

double regime_weight(const std::vector<int>& a_bar, double delta, double p) {
    check_p_delta(p, delta);
    const double den2 = (delta * p + 1.0 - p) * (delta * p + 1.0 - p);
    double w = 1.0;
    for (int a : a_bar) {
        if (a != 0 && a != 1) throw DomainError("treatment sequence must be binary");
        w *= a ? p * delta * delta * p / den2 : (1.0 - p) * (1.0 - p) / den2;
    }
    return w;
}

double exact_variance_oracle(const MomentSpec& spec, SingleDrawEstimator which) {
    spec.validate();
    const double p = spec.p, delta = spec.delta;
    const int T = spec.T;
    if (which == SingleDrawEstimator::at) {
        const std::vector<int> ones(T, 1);
        const double m = spec.mean_of(ones);
        return std::pow(1.0 / p, T) * spec.second_of(ones) - m * m;
    }
    if (which == SingleDrawEstimator::nt) {
        const std::vector<int> zeros(T, 0);
        const double m = spec.mean_of(zeros);
        return std::pow(1.0 / (1.0 - p), T) * spec.second_of(zeros) - m * m;
    }
    const double den = delta * p + 1.0 - p;
    double first = 0.0, second = 0.0;
    if (spec.exchangeable()) {
        for (int k = 0; k <= T; ++k) {
            const double mass = boost::math::binomial_coefficient<double>(T, k) * std::pow(p, k) * std::pow(1.0 - p, T - k);
            const double w = std::pow(delta, k) / std::pow(den, T);
            first += mass * w * spec.mean_by_count(k);
            second += mass * w * w * spec.second_by_count(k);
        }
    } else {
        if (T > kMaxEnumeration)
            throw PreconditionError("full enumeration is limited to T <= " + std::to_string(kMaxEnumeration) +
                                    " without exchangeable moments");
        for (unsigned long mask = 0; mask < (1UL << T); ++mask) {
            const auto a = sequence_from_mask(mask, T);
            double mass = 1.0, w = 1.0;
            for (int v : a) {
                mass *= v ? p : 1.0 - p;
                w *= (v ? delta : 1.0) / den;
            }
            first += mass * w * spec.mean_of(a);
            second += mass * w * w * spec.second_of(a);
        }
    }
    return second - first * first;
}

double decomposition_check(const DiscreteOutcome& outcome, double p, double delta, int T) {
    check_p_delta(p, delta);
    if (!outcome) throw PreconditionError("outcome law is missing");
    if (T < 1 || T > 4) throw PreconditionError("decomposition check enumerates T <= 4 only");
    const double den = delta * p + 1.0 - p;
    const unsigned long count = 1UL << T;
    std::vector<double> mass(count), mu(count), second(count), root_w(count);
    double e1 = 0.0, e2 = 0.0;
    for (unsigned long mask = 0; mask < count; ++mask) {
        const auto a = sequence_from_mask(mask, T);
        const auto atoms = outcome(a);
        if (atoms.empty()) throw PreconditionError("outcome law needs finite support");
        double total = 0.0, m = 0.0, s = 0.0;
        for (const auto& [y, w] : atoms) {
            if (!(w >= 0.0) || !std::isfinite(y)) throw PreconditionError("outcome atoms need finite values and weights");
            total += w;
            m += w * y;
            s += w * y * y;
        }
        if (std::abs(total - 1.0) > 1e-12) throw PreconditionError("outcome atom probabilities must sum to one");
        double pa = 1.0, ratio = 1.0;
        for (int v : a) {
            pa *= v ? p : 1.0 - p;
            ratio *= (v ? delta : 1.0) / den;
        }
        mass[mask] = pa;
        mu[mask] = m;
        second[mask] = s;
        root_w[mask] = std::sqrt(regime_weight(a, delta, p));
        // ψ̂_inc = Π ratio · Y on the event Ā = ā
        e1 += pa * ratio * m;
        e2 += pa * ratio * ratio * s;
    }
    const double lhs = e2 - e1 * e1;
    double rhs = 0.0;
    for (unsigned long i = 0; i < count; ++i)
        for (unsigned long j = 0; j < count; ++j) {
            const double cov = (i == j ? second[i] / mass[i] : 0.0) - mu[i] * mu[j];
            rhs += root_w[i] * root_w[j] * cov;
        }
    return std::abs(lhs - rhs);
}

EfficiencyReport re_curve(const std::function<MomentSpec(int)>& moments, int t_max, Variant variant,
                          std::optional<double> c) {
    if (t_max < 1) throw ConfigError("t_max must be at least 1");
    EfficiencyReport rep;
    rep.variant = variant;
    double c1 = std::numeric_limits<double>::infinity();
    for (int T = 1; T <= t_max; ++T) {
        const MomentSpec spec = moments(T);
        if (spec.T != T) throw PreconditionError("moment provider returned the wrong horizon");
        rep.p = spec.p;
        rep.delta = spec.delta;
        const auto b = re_bounds(spec, variant, c);
        EfficiencyRow row;
        row.T = T;
        row.variant = variant;
        row.lower = b.lower;
        row.upper = b.upper;
        row.var_inc = exact_variance_oracle(spec, SingleDrawEstimator::inc);
        row.var_ref = exact_variance_oracle(
            spec, variant == Variant::always_treated ? SingleDrawEstimator::at : SingleDrawEstimator::nt);
        row.exact_ratio = row.var_inc / row.var_ref;
        if (!rep.crossing_T && row.var_inc < row.var_ref) rep.crossing_T = T;
        const std::vector<int> ones(T, 1);
        c1 = std::min(c1, spec.second_of(ones) / (spec.b_u * spec.b_u));
        rep.rows.push_back(row);
    }
    if (variant == Variant::always_treated && rep.delta > 1.0 && c1 > 0.0 && c1 <= 1.0)
        rep.tmin = tmin_report(rep.delta, rep.p, c1);
    return rep;
}

} // namespace increff
