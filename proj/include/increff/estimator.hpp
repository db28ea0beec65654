#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "increff/intervention.hpp"
#include "increff/nuisance.hpp"
#include "increff/panel.hpp"

namespace increff {

/// Per-stage pieces of the uncentered influence value of one unit:
///   φ = Σ_s C_{s-1} [g_s + b_s − ratio_s (R_{s+1}/ω_s) m_s(H_s, A_s)] R_s + C_t Y_t
/// with C_0 = 1 and C_s = C_{s-1} ratio_s R_{s+1}/ω_s.
struct EifTerms {
    std::vector<double> correction;  // bracketed stage term (before C_{s-1}); NaN where R_s = 0
    std::vector<double> weight;      // C_{s-1} for s = 1..t
    double terminal = 0.0;           // C_t Y_t (0 when Y_t is unobserved)
    double value = 0.0;
};

EifTerms eif_terms(const Trajectory& tr, const StageNuisance& eta, double delta, int t);
double eif_contribution(const Trajectory& tr, const StageNuisance& eta, double delta, int t);

/// Same value, evaluating the fitted models of `eta` on the trajectory's own histories.
double eif_contribution(const Trajectory& tr, const NuisanceSet& eta, double delta, int t);

/// C_t = Π_s ratio_s R_{s+1}/ω_s: the inverse-probability weight of the terminal outcome.
double cumulative_weight(const Trajectory& tr, const StageNuisance& eta, double delta, int t);

/// Closed-form single-stage influence value. `r` is the retention indicator after
/// the stage; `y` is only read when r = 1.
double eif_point_exposure_oracle(int a, double y, int r, double pi, double omega, double mu1, double mu0,
                                 double delta);

struct EifMatrix {
    Eigen::MatrixXd values;  // n × |grid|
    int t = 0;
    DeltaGrid grid;
    std::vector<int> fold;   // fold label per row (0 when no splitting)
};

struct EffectEstimate {
    std::string kind;
    int t = 0;
    std::size_t n = 0;
    std::vector<double> delta;
    std::vector<double> psi_hat;
    std::vector<double> sigma_hat;
    std::vector<std::vector<double>> fold_psi;  // [fold][delta]
    std::vector<std::size_t> fold_sizes;
};

struct FoldDiagnostics {
    int fold = 0;
    std::vector<StageDiagnostics> pi, omega;
    std::vector<std::vector<StageDiagnostics>> m;  // [delta][stage]
};

struct EstimationDiagnostics {
    std::size_t fully_weighted = 0;  // units with R_{t+1} = 1
    std::vector<FoldDiagnostics> folds;
    std::vector<std::string> warnings;
};

struct EstimationResult {
    EffectEstimate estimate;
    EifMatrix eif;
    EstimationDiagnostics diagnostics;
};

struct RunOptions {
    int threads = 1;
};

EstimationResult estimate_cross_fit(const PanelDataset& ds, int K, std::uint64_t seed, const NuisanceSpecs& specs,
                                    const DeltaGrid& grid, int t, const RunOptions& run = {});

/// Plug-in: nuisances fitted once on all units. With `zero_outcome_model` every m̂ is 0,
/// which reduces the estimator to IPW.
EstimationResult estimate_plugin(const PanelDataset& ds, const NuisanceSpecs& specs, const DeltaGrid& grid, int t,
                                 const RunOptions& run = {}, bool zero_outcome_model = false);

EstimationResult estimate_ipw(const PanelDataset& ds, const NuisanceSpecs& specs, const DeltaGrid& grid, int t,
                              const RunOptions& run = {});

/// Cross-fit estimator run on the units retained through t with ω̂ ≡ 1.
EstimationResult estimate_no_censoring(const PanelDataset& ds, int K, std::uint64_t seed, const NuisanceSpecs& specs,
                                       const DeltaGrid& grid, int t, const RunOptions& run = {});

/// Mean Y_t among retained always-treated minus retained never-treated units.
double estimate_complete_case(const PanelDataset& ds, int t);

/// Row-mean reduction of an EIF matrix in fixed index order, plus per-fold means and σ̂.
EffectEstimate summarize(const EifMatrix& eif, const std::string& kind);

} // namespace increff
