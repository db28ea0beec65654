#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "increff/learners.hpp"
#include "increff/panel.hpp"

namespace increff {

struct NuisanceOptions {
    double eps_clip = kDefaultClip;  // treatment propensities live in [eps_clip, 1 - eps_clip]
    double eps_omega = 0.01;         // retention propensities live in [eps_omega, 1]
};

struct NuisanceSpecs {
    LearnerSpec pi = LearnerSpec::logistic();
    LearnerSpec omega = LearnerSpec::logistic();
    LearnerSpec m = LearnerSpec::ridge(1.0);
    NuisanceOptions options;
};

/// Flattened histories H_t for t = 1..horizon, one row per unit with R_t = 1, in
/// dataset order. Built once and shared by every fit on the same dataset.
class FeatureCache {
public:
    FeatureCache(const PanelDataset& ds, int horizon);

    int horizon() const noexcept { return horizon_; }
    const Eigen::MatrixXd& history(int t) const { return hist_.at(t - 1); }
    const std::vector<std::size_t>& units(int t) const { return units_.at(t - 1); }
    /// Row of `unit` in history(t), or -1 when R_t = 0.
    int row_of(int t, std::size_t unit) const { return rows_.at(t - 1)[unit]; }
    /// Treatment A_t aligned with history(t).
    const Eigen::VectorXd& treatment(int t) const { return treat_.at(t - 1); }
    std::size_t n() const noexcept { return n_; }

private:
    int horizon_;
    std::size_t n_;
    std::vector<Eigen::MatrixXd> hist_;
    std::vector<std::vector<std::size_t>> units_;
    std::vector<std::vector<int>> rows_;
    std::vector<Eigen::VectorXd> treat_;
};

/// (H_t, A_t) with A_t replaced by `a`.
Eigen::MatrixXd with_treatment(const Eigen::MatrixXd& history, const Eigen::VectorXd& a);
Eigen::MatrixXd with_treatment(const Eigen::MatrixXd& history, double a);

struct StageDiagnostics {
    int t = 0;
    std::size_t n_train = 0;
    int iterations = 0;
    bool converged = true;
    bool constant = false;
    bool underdetermined = false;  // fewer than max(10, width + 2) training rows
};

/// Which units may be used for training: those whose fold label differs from
/// `exclude_fold`. exclude_fold = 0 (or an empty label vector) means every unit.
struct TrainingPool {
    std::vector<int> labels;
    int exclude_fold = 0;

    bool contains(std::size_t unit) const {
        return exclude_fold == 0 || labels.empty() || labels[unit] != exclude_fold;
    }
    static TrainingPool all() { return {}; }
    static TrainingPool excluding(const FoldAssignment& folds, int k) { return {folds.labels, k}; }
};

/// Per-stage models plus their predictions on every unit of the dataset
/// (NaN where the stage is unobserved).
struct SequenceFit {
    std::vector<FittedModel> models;
    std::vector<StageDiagnostics> stages;
    std::vector<Eigen::VectorXd> predictions;
    int exclude_fold = 0;
    std::vector<std::size_t> training_units;
};

SequenceFit fit_propensity_sequence(const PanelDataset& ds, const FeatureCache& cache, const TrainingPool& pool,
                                    const LearnerSpec& spec, const NuisanceOptions& opts = {});

SequenceFit fit_missingness_sequence(const PanelDataset& ds, const FeatureCache& cache, const TrainingPool& pool,
                                     const LearnerSpec& spec, const NuisanceOptions& opts = {});

/// m̂_t(H_t, a) for t = horizon..1, fitted by the backward pseudo-outcome recursion.
struct OutcomeFit {
    double delta = 1.0;
    int horizon = 0;
    int exclude_fold = 0;
    std::vector<FittedModel> models;
    std::vector<StageDiagnostics> stages;
    std::vector<Eigen::VectorXd> m1, m0;  // predictions per stage, aligned with the dataset
    std::vector<std::size_t> training_units;
};

OutcomeFit fit_pseudo_outcome_sequence(const PanelDataset& ds, const FeatureCache& cache, const TrainingPool& pool,
                                       const SequenceFit& pi_hat, const LearnerSpec& spec, double delta,
                                       const NuisanceOptions& opts = {});

/// Nuisance values of one unit at stages 1..t. Entries for stages with R_s = 0 are NaN
/// and never read.
struct StageNuisance {
    std::vector<double> pi, omega, m1, m0;
};

/// η̂ = (π̂, ω̂, m̂) for one δ and one excluded fold.
struct NuisanceSet {
    std::shared_ptr<const SequenceFit> pi_hat;
    std::shared_ptr<const SequenceFit> omega_hat;
    std::shared_ptr<const OutcomeFit> m_hat;
    double delta = 1.0;
    int horizon = 0;
    int exclude_fold = 0;
    NuisanceOptions options;

    StageNuisance unit(std::size_t i) const;
};

} // namespace increff
