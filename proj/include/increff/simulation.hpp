#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "increff/estimator.hpp"
#include "increff/intervention.hpp"
#include "increff/nuisance.hpp"
#include "increff/panel.hpp"
#include "increff/rng.hpp"

namespace increff {

enum class DgpKind { dropout, trial, observational };

std::string to_string(DgpKind k);
DgpKind parse_dgp_kind(const std::string& s);

/// dropout: X_t ~ N(0, I_2), π_t = expit(1ᵀX_t + 2 Σ_{s=t−2}^{t−1}(A_s − ½)),
///   ω_t = expit(C_0 + Σ_{s≤t} A_s) with C_0 ~ U[u_l, 5] per subject,
///   Y_T ~ N(10 + A_T + A_{T−1} + |1ᵀX_T + 1ᵀX_{T−1}|, 1);
/// trial: no covariates, π_t ≡ p, Y_T ~ N(10 + √(#treated), 1) truncated at ±2, no dropout;
/// observational: the dropout model's covariates, propensity and outcome without dropout.
/// Only the terminal outcome is generated; Y_T is recorded only when R_{T+1} = 1.
struct DgpConfig {
    DgpKind kind = DgpKind::dropout;
    std::size_t n = 1000;
    int T = 10;
    double u_l = 1.0;
    double p = 0.5;
    std::uint64_t seed = 0;

    void validate() const;
    int d() const noexcept { return kind == DgpKind::trial ? 0 : 2; }
};

PanelDataset simulate(const DgpConfig& cfg);

/// Fraction of subjects with R_{T+1} = 0.
double dropout_fraction(const PanelDataset& ds);

/// Draw from N(mean, 1) truncated to mean ± 2.
double truncated_normal(Rng& rng, double mean);

/// Variance of a standard normal truncated to ±2: 1 − 4φ(2)/(2Φ(2) − 1).
double truncated_normal_variance();

struct TruthCurve {
    int t = 0;
    std::size_t m = 0;
    std::vector<double> delta, psi, se;
};

/// Intervention-draw Monte Carlo: m subjects from the structural model with
/// A_s ~ Bernoulli(q_s) and no dropout, averaging Y_t. One RNG stream per δ.
TruthCurve true_psi_oracle(const DgpConfig& cfg, const DeltaGrid& grid, int t, std::size_t m, std::uint64_t seed,
                           int threads = 1);

/// True π_t, ω_t and outcome regressions m_{s,δ} of the DGP, packaged as oracle learners.
NuisanceSpecs oracle_specs(const DgpConfig& cfg);

/// (1/D) Σ_d (1/S) Σ_s [(ψ̂_s(δ_d) − ψ(δ_d))/ψ̄]²; `take_sqrt` returns its square root.
double normalized_rmse(const Eigen::MatrixXd& estimates, const std::vector<double>& truths, double psi_bar,
                       bool take_sqrt = false);

struct BenchmarkConfig {
    DgpConfig dgp;
    int S = 50;
    DeltaGrid grid;
    NuisanceSpecs specs;
    int K = 2;
    std::uint64_t seed = 0;
    std::size_t truth_m = 200000;
    bool take_sqrt = false;
    int threads = 1;
};

struct BenchmarkResult {
    std::vector<std::string> estimators;           // cross_fit, plugin, ipw, no_censoring
    std::map<std::string, double> rmse;
    std::map<std::string, Eigen::MatrixXd> estimates;  // S × D
    TruthCurve truth;
    double psi_bar = 0.0;
    double dropout_pct = 0.0;  // mean over replicates of 100 × dropout_fraction
    std::vector<std::string> warnings;
};

BenchmarkResult run_benchmark(const BenchmarkConfig& cfg);

struct RelativeEfficiencyPoint {
    int t = 0;
    double var_inc = 0, var_at = 0, var_nt = 0;
    double ratio_at = 0, ratio_nt = 0;  // Var(ψ̂_at)/Var(ψ̂_inc), Var(ψ̂_nt)/Var(ψ̂_inc)
    double lower_at = 0, lower_nt = 0;  // 1 / analytic upper bound of Var(inc)/Var(ref) (trial only, NaN otherwise)
    bool excluded = false;              // Var(ψ̂_inc) = 0
    std::size_t positivity_failures = 0;  // replicates kept despite missing always/never-treated units
};

struct RelativeEfficiencyResult {
    double delta = 1.0;
    std::vector<RelativeEfficiencyPoint> points;
    std::vector<std::string> warnings;
};

/// For each t, `reps` datasets of cfg.n units with horizon t; sample variances of the
/// single-draw estimators ψ̂_at, ψ̂_nt, ψ̂_inc across replicates, computed with the true
/// propensities. With `ensure_positivity`, each dataset is drawn conditionally on containing
/// at least one always-treated and one never-treated unit.
RelativeEfficiencyResult relative_efficiency_mc(const DgpConfig& cfg, double delta, int t_from, int t_to, int reps,
                                                std::uint64_t seed, bool ensure_positivity = true, int threads = 1);

} // namespace increff
