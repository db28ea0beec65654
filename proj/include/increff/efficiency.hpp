#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace increff {

/// Counterfactual moments of Y^{ā} for a study with constant propensity p.
/// When `mean_by_count`/`second_by_count` are set the moments depend on ā only
/// through its number of ones and sums collapse to T + 1 binomial terms.
struct MomentSpec {
    double p = 0.5;
    double delta = 1.0;
    int T = 1;
    double b_u = 1.0;
    std::function<double(const std::vector<int>&)> mean;
    std::function<double(const std::vector<int>&)> second_moment;
    std::function<double(int)> mean_by_count;
    std::function<double(int)> second_by_count;

    bool exchangeable() const { return mean_by_count && second_by_count; }
    double mean_of(const std::vector<int>& a) const;
    double second_of(const std::vector<int>& a) const;
    void validate() const;
};

/// Trial moments: E[Y^{ā}] = 10 + √k and E[(Y^{ā})²] = (10 + √k)² + σ²_trunc for k ones,
/// with the outcome bound b_u = 12 + √T.
MomentSpec trial_moments(double p, double delta, int T);

enum class Variant { always_treated, never_treated };
std::string to_string(Variant v);
Variant parse_variant(const std::string& s);

struct ReBounds {
    double lower = 0.0;
    double upper = 0.0;
    double base = 0.0;    // per-stage factor raised to the power T
    double C = 0.0;       // b_u² / E[(Y^{ā'})²]
    double zeta = 0.0;
    double c = 0.0;
    double c_floor = 0.0;
};

/// Relative-efficiency bounds. Always-treated:
///   lower = C_T[base^T − p^T], upper = C_T ζ base^T,
///   base = (δ²p² + p(1−p))/(δp+1−p)², C_T = b_u²/E[(Y^1̄)²],
///   ζ = 1 + c (E Y^1̄)² / ((1/p)^T E[(Y^1̄)²]).
/// Never-treated: base = (δ²p(1−p) + (1−p)²)/(δp+1−p)², p^T → (1−p)^T, Y^1̄ → Y^0̄.
/// c defaults to 1.001 × its admissible floor 1/(1 − p^T (E Y)²/E[Y²]).
ReBounds re_bounds(const MomentSpec& spec, Variant variant, std::optional<double> c = std::nullopt);

/// First T with [(δ²p + 1 − p)/(δp + 1 − p)²]^T − c₁/p^T + 2 < 0, by direct scan.
int tmin_first_negative(double delta, double p, double c1);

struct TminReport {
    int first_negative = 0;  // the scan value
    int t_min = 0;           // first_negative − 1: the "for every T > T_min" convention
    double c1 = 0.0;
};
TminReport tmin_report(double delta, double p, double c1);

/// Π_t π(a_t) {1(a_t=1) δ²p + 1(a_t=0)(1−p)} / (δp + 1 − p)².
double regime_weight(const std::vector<int>& a_bar, double delta, double p);

enum class SingleDrawEstimator { at, nt, inc };

/// Exact variance of the single-draw estimators Π(A_t/p) Y, Π((1−A_t)/(1−p)) Y and
/// Π(δA_t + 1 − A_t)/(δp + 1 − p) Y.
double exact_variance_oracle(const MomentSpec& spec, SingleDrawEstimator which);

/// Outcome law with finite support: (value, probability) atoms given ā.
using DiscreteOutcome = std::function<std::vector<std::pair<double, double>>(const std::vector<int>&)>;

/// |Var(ψ̂_inc) − Σ_ā Σ_ā' √w(ā)√w(ā') Cov(ψ̂_c(ā), ψ̂_c(ā'))| by full enumeration,
/// where ψ̂_c(ā) = 1(Ā = ā) Y / Π π(a_t). T ≤ 4.
double decomposition_check(const DiscreteOutcome& outcome, double p, double delta, int T);

struct EfficiencyRow {
    int T = 0;
    double lower = 0, upper = 0, exact_ratio = 0;  // exact_ratio = Var(ψ̂_inc) / Var(ψ̂_at or ψ̂_nt)
    double var_inc = 0, var_ref = 0;
    Variant variant = Variant::always_treated;
};

struct EfficiencyReport {
    double p = 0.5, delta = 1.0;
    Variant variant = Variant::always_treated;
    std::vector<EfficiencyRow> rows;
    std::optional<int> crossing_T;     // first T with Var(ψ̂_inc) < Var(ψ̂_ref)
    std::optional<TminReport> tmin;    // δ > 1, always-treated only
};

/// Rows for T = 1..t_max using `moments(T)`.
EfficiencyReport re_curve(const std::function<MomentSpec(int)>& moments, int t_max, Variant variant,
                          std::optional<double> c = std::nullopt);

} // namespace increff
