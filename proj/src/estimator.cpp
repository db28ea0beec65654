#include "increff/estimator.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <memory>

#include "increff/errors.hpp"
#include "increff/inference.hpp"
#include "increff/parallel.hpp"

namespace increff {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_stage(const Trajectory& tr, const StageNuisance& eta, int s) {
    const double pi = eta.pi[s - 1];
    const double omega = eta.omega[s - 1];
    if (!(pi > 0.0 && pi < 1.0))
        throw InvariantViolation("subject " + tr.subject_id + ": treatment propensity " + std::to_string(pi) +
                                 " at t=" + std::to_string(s) + " is not inside (0, 1)");
    if (!(omega > 0.0 && omega <= 1.0))
        throw InvariantViolation("subject " + tr.subject_id + ": retention propensity " + std::to_string(omega) +
                                 " at t=" + std::to_string(s) + " is not inside (0, 1]");
    if (!std::isfinite(eta.m1[s - 1]) || !std::isfinite(eta.m0[s - 1]))
        throw InvariantViolation("subject " + tr.subject_id + ": non-finite outcome regression at t=" +
                                 std::to_string(s));
}

void check_inputs(const Trajectory& tr, const StageNuisance& eta, double delta, int t) {
    if (!(delta > 0.0) || !std::isfinite(delta)) throw DomainError("delta must be positive and finite");
    if (t < 1 || t > tr.horizon())
        throw PreconditionError("horizon " + std::to_string(t) + " outside 1.." + std::to_string(tr.horizon()));
    const auto need = static_cast<std::size_t>(t);
    if (eta.pi.size() < need || eta.omega.size() < need || eta.m1.size() < need || eta.m0.size() < need)
        throw PreconditionError("nuisance values do not reach the horizon");
}

// Shared by the influence function and the IPW integrand so both produce the same
// floating-point weights.
inline double next_weight(double c, double ratio, int retained_next, double omega) {
    return c * ratio * retained_next / omega;
}

inline double stage_ratio(int a, double pi, double delta) {
    return (a ? delta : 1.0) / (delta * pi + 1.0 - pi);
}

void check_horizon(const PanelDataset& ds, int t) {
    if (t < 1 || t > ds.T())
        throw PreconditionError("horizon " + std::to_string(t) + " outside 1.." + std::to_string(ds.T()));
}

FoldDiagnostics fold_diagnostics(int k, const SequenceFit& pi, const SequenceFit& omega, std::size_t grid_size) {
    FoldDiagnostics d;
    d.fold = k;
    d.pi = pi.stages;
    d.omega = omega.stages;
    d.m.resize(grid_size);
    return d;
}

void collect_warnings(EstimationDiagnostics& diag) {
    for (const auto& f : diag.folds) {
        auto note = [&](const std::vector<StageDiagnostics>& stages, const std::string& what) {
            for (const auto& s : stages) {
                if (s.underdetermined)
                    diag.warnings.push_back(what + " at t=" + std::to_string(s.t) + " (fold " + std::to_string(f.fold) +
                                            ") fitted on only " + std::to_string(s.n_train) + " units");
                if (!s.converged)
                    diag.warnings.push_back(what + " at t=" + std::to_string(s.t) + " (fold " + std::to_string(f.fold) +
                                            ") did not converge");
            }
        };
        note(f.pi, "treatment propensity");
        note(f.omega, "retention propensity");
        if (!f.m.empty()) note(f.m.front(), "outcome regression");
    }
}

std::size_t count_fully_weighted(const PanelDataset& ds, int t) {
    std::size_t c = 0;
    for (const auto& tr : ds.trajectories()) c += tr.retention[t];
    return c;
}

struct PooledFit {
    std::shared_ptr<const SequenceFit> pi, omega;
};

PooledFit fit_propensities(const PanelDataset& ds, const FeatureCache& cache, const TrainingPool& pool,
                           const NuisanceSpecs& specs) {
    PooledFit f;
    f.pi = std::make_shared<SequenceFit>(fit_propensity_sequence(ds, cache, pool, specs.pi, specs.options));
    f.omega = std::make_shared<SequenceFit>(fit_missingness_sequence(ds, cache, pool, specs.omega, specs.options));
    return f;
}

OutcomeFit zero_outcome_fit(const FeatureCache& cache, double delta) {
    OutcomeFit fit;
    fit.delta = delta;
    fit.horizon = cache.horizon();
    for (int t = 1; t <= cache.horizon(); ++t) {
        Eigen::VectorXd z = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(cache.n()), kNaN);
        for (auto i : cache.units(t)) z[i] = 0.0;
        fit.m1.push_back(z);
        fit.m0.push_back(z);
        fit.stages.push_back({t, 0, 0, true, true, false});
    }
    return fit;
}

} // namespace

EifTerms eif_terms(const Trajectory& tr, const StageNuisance& eta, double delta, int t) {
    check_inputs(tr, eta, delta, t);
    EifTerms out;
    out.correction.assign(t, kNaN);
    out.weight.assign(t, 0.0);
    double c = 1.0;
    double phi = 0.0;
    for (int s = 1; s <= t; ++s) {
        out.weight[s - 1] = c;
        if (!tr.retention[s - 1]) continue;  // every later factor carries R_s = 0
        check_stage(tr, eta, s);
        const double pi = eta.pi[s - 1];
        const double omega = eta.omega[s - 1];
        const double m1 = eta.m1[s - 1];
        const double m0 = eta.m0[s - 1];
        const int a = tr.a(s);
        const int r_next = tr.retention[s];
        const double den = delta * pi + 1.0 - pi;
        const double ratio = stage_ratio(a, pi, delta);
        const double g = (delta * pi * m1 + (1.0 - pi) * m0) / den;
        const double b = delta * (a - pi) * (m1 - m0) / (den * den);
        const double ipw = r_next ? ratio * (r_next / omega) * (a ? m1 : m0) : 0.0;
        const double term = g + b - ipw;
        out.correction[s - 1] = term;
        phi += c * term;
        c = next_weight(c, ratio, r_next, omega);
    }
    if (tr.retention[t]) {
        if (!tr.outcomes[t - 1])
            throw PreconditionError("subject " + tr.subject_id + " is retained after t=" + std::to_string(t) +
                                    " but Y_" + std::to_string(t) + " is missing");
        out.terminal = c * *tr.outcomes[t - 1];
        phi += out.terminal;
    }
    out.value = phi;
    return out;
}

double eif_contribution(const Trajectory& tr, const StageNuisance& eta, double delta, int t) {
    return eif_terms(tr, eta, delta, t).value;
}

double eif_contribution(const Trajectory& tr, const NuisanceSet& eta, double delta, int t) {
    if (!eta.pi_hat || !eta.omega_hat || !eta.m_hat) throw PreconditionError("nuisance set is incomplete");
    if (eta.m_hat->delta != delta) throw PreconditionError("outcome regressions were fitted for a different delta");
    if (t > eta.horizon) throw PreconditionError("nuisance set does not reach the requested horizon");
    StageNuisance v;
    const auto& o = eta.options;
    for (int s = 1; s <= t; ++s) {
        if (!tr.retention[s - 1]) {
            v.pi.push_back(kNaN);
            v.omega.push_back(kNaN);
            v.m1.push_back(kNaN);
            v.m0.push_back(kNaN);
            continue;
        }
        const Eigen::VectorXd h = history_at(tr, s).features();
        Eigen::VectorXd ha(h.size() + 1);
        ha.head(h.size()) = h;
        ha[h.size()] = tr.a(s);
        v.pi.push_back(std::clamp(eta.pi_hat->models.at(s - 1).predict(h), o.eps_clip, 1.0 - o.eps_clip));
        v.omega.push_back(std::clamp(eta.omega_hat->models.at(s - 1).predict(ha), o.eps_omega, 1.0));
        if (eta.m_hat->models.empty()) {
            v.m1.push_back(0.0);
            v.m0.push_back(0.0);
            continue;
        }
        const auto& m = eta.m_hat->models.at(s - 1);
        ha[h.size()] = 1.0;
        v.m1.push_back(m.predict(ha));
        ha[h.size()] = 0.0;
        v.m0.push_back(m.predict(ha));
    }
    return eif_contribution(tr, v, delta, t);
}

double cumulative_weight(const Trajectory& tr, const StageNuisance& eta, double delta, int t) {
    check_inputs(tr, eta, delta, t);
    double c = 1.0;
    for (int s = 1; s <= t; ++s) {
        if (!tr.retention[s - 1]) return 0.0;
        check_stage(tr, eta, s);
        const double pi = eta.pi[s - 1];
        c = next_weight(c, stage_ratio(tr.a(s), pi, delta), tr.retention[s], eta.omega[s - 1]);
    }
    return c;
}

double eif_point_exposure_oracle(int a, double y, int r, double pi, double omega, double mu1, double mu0,
                                 double delta) {
    if (!(delta > 0.0)) throw DomainError("delta must be positive");
    if (!(pi > 0.0 && pi < 1.0)) throw DomainError("propensity must lie in (0, 1)");
    if (!(omega > 0.0 && omega <= 1.0)) throw DomainError("retention propensity must lie in (0, 1]");
    if ((a != 0 && a != 1) || (r != 0 && r != 1)) throw DomainError("a and r must be binary");
    const double den = delta * pi + 1.0 - pi;
    auto phi_arm = [&](int arm, double mu) {
        const double p_arm = arm ? pi : 1.0 - pi;
        const double ipw = (a == arm && r == 1) ? (y - mu) / (p_arm * omega) : 0.0;
        return ipw + mu;
    };
    const double avg = (delta * pi * phi_arm(1, mu1) + (1.0 - pi) * phi_arm(0, mu0)) / den;
    return avg + delta * (mu1 - mu0) * (a - pi) / (den * den);
}

EffectEstimate summarize(const EifMatrix& eif, const std::string& kind) {
    EffectEstimate e;
    e.kind = kind;
    e.t = eif.t;
    e.n = static_cast<std::size_t>(eif.values.rows());
    e.delta = eif.grid.values;
    const auto J = static_cast<Eigen::Index>(eif.grid.size());
    const auto n = eif.values.rows();
    e.psi_hat.assign(J, 0.0);
    for (Eigen::Index j = 0; j < J; ++j) {
        double sum = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) sum += eif.values(i, j);
        e.psi_hat[j] = sum / static_cast<double>(n);
    }
    std::map<int, std::vector<Eigen::Index>> by_fold;
    for (Eigen::Index i = 0; i < n; ++i) by_fold[eif.fold.empty() ? 0 : eif.fold[i]].push_back(i);
    for (const auto& [k, rows] : by_fold) {
        std::vector<double> means(J, 0.0);
        for (Eigen::Index j = 0; j < J; ++j) {
            double sum = 0.0;
            for (auto i : rows) sum += eif.values(i, j);
            means[j] = sum / static_cast<double>(rows.size());
        }
        e.fold_psi.push_back(std::move(means));
        e.fold_sizes.push_back(rows.size());
    }
    if (n >= 2) {
        e.sigma_hat = estimate_variance(eif, e);
        for (auto& v : e.sigma_hat) v = std::sqrt(v);
    } else {
        e.sigma_hat.assign(J, 0.0);
    }
    return e;
}

EstimationResult estimate_cross_fit(const PanelDataset& ds, int K, std::uint64_t seed, const NuisanceSpecs& specs,
                                    const DeltaGrid& grid, int t, const RunOptions& run) {
    check_horizon(ds, t);
    if (grid.size() == 0) throw ConfigError("delta grid is empty");
    const FoldAssignment folds = split_folds(ds, K, seed);
    const FeatureCache cache(ds, t);

    std::vector<PooledFit> fits(K);
    parallel_for(K, run.threads, [&](std::size_t k) {
        fits[k] = fit_propensities(ds, cache, TrainingPool::excluding(folds, static_cast<int>(k) + 1), specs);
    });

    EstimationResult res;
    res.eif.t = t;
    res.eif.grid = grid;
    res.eif.fold = folds.labels;
    res.eif.values.resize(static_cast<Eigen::Index>(ds.n()), static_cast<Eigen::Index>(grid.size()));
    for (int k = 1; k <= K; ++k)
        res.diagnostics.folds.push_back(fold_diagnostics(k, *fits[k - 1].pi, *fits[k - 1].omega, grid.size()));

    std::vector<std::vector<std::size_t>> members(K);
    for (int k = 1; k <= K; ++k) members[k - 1] = folds.members(k);

    const std::size_t tasks = static_cast<std::size_t>(K) * grid.size();
    parallel_for(tasks, run.threads, [&](std::size_t task) {
        const int k = static_cast<int>(task / grid.size()) + 1;
        const std::size_t j = task % grid.size();
        const double delta = grid[j];
        const TrainingPool pool = TrainingPool::excluding(folds, k);
        NuisanceSet eta;
        eta.pi_hat = fits[k - 1].pi;
        eta.omega_hat = fits[k - 1].omega;
        eta.m_hat = std::make_shared<OutcomeFit>(
            fit_pseudo_outcome_sequence(ds, cache, pool, *eta.pi_hat, specs.m, delta, specs.options));
        eta.delta = delta;
        eta.horizon = t;
        eta.exclude_fold = k;
        eta.options = specs.options;
        for (auto i : members[k - 1])
            res.eif.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                eif_contribution(ds[i], eta.unit(i), delta, t);
        res.diagnostics.folds[k - 1].m[j] = eta.m_hat->stages;
    });

    res.estimate = summarize(res.eif, "cross_fit");
    res.diagnostics.fully_weighted = count_fully_weighted(ds, t);
    collect_warnings(res.diagnostics);
    return res;
}

EstimationResult estimate_plugin(const PanelDataset& ds, const NuisanceSpecs& specs, const DeltaGrid& grid, int t,
                                 const RunOptions& run, bool zero_outcome_model) {
    check_horizon(ds, t);
    if (grid.size() == 0) throw ConfigError("delta grid is empty");
    const FeatureCache cache(ds, t);
    const TrainingPool pool = TrainingPool::all();
    const PooledFit fit = fit_propensities(ds, cache, pool, specs);

    EstimationResult res;
    res.eif.t = t;
    res.eif.grid = grid;
    res.eif.fold.assign(ds.n(), 0);
    res.eif.values.resize(static_cast<Eigen::Index>(ds.n()), static_cast<Eigen::Index>(grid.size()));
    res.diagnostics.folds.push_back(fold_diagnostics(0, *fit.pi, *fit.omega, grid.size()));

    parallel_for(grid.size(), run.threads, [&](std::size_t j) {
        const double delta = grid[j];
        NuisanceSet eta;
        eta.pi_hat = fit.pi;
        eta.omega_hat = fit.omega;
        eta.m_hat = std::make_shared<OutcomeFit>(
            zero_outcome_model ? zero_outcome_fit(cache, delta)
                               : fit_pseudo_outcome_sequence(ds, cache, pool, *fit.pi, specs.m, delta, specs.options));
        eta.delta = delta;
        eta.horizon = t;
        eta.options = specs.options;
        for (std::size_t i = 0; i < ds.n(); ++i)
            res.eif.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                eif_contribution(ds[i], eta.unit(i), delta, t);
        res.diagnostics.folds[0].m[j] = eta.m_hat->stages;
    });

    res.estimate = summarize(res.eif, zero_outcome_model ? "plugin_zero_outcome" : "plugin");
    res.diagnostics.fully_weighted = count_fully_weighted(ds, t);
    collect_warnings(res.diagnostics);
    return res;
}

EstimationResult estimate_ipw(const PanelDataset& ds, const NuisanceSpecs& specs, const DeltaGrid& grid, int t,
                              const RunOptions& run) {
    check_horizon(ds, t);
    if (grid.size() == 0) throw ConfigError("delta grid is empty");
    const FeatureCache cache(ds, t);
    const PooledFit fit = fit_propensities(ds, cache, TrainingPool::all(), specs);

    EstimationResult res;
    res.eif.t = t;
    res.eif.grid = grid;
    res.eif.fold.assign(ds.n(), 0);
    res.eif.values.resize(static_cast<Eigen::Index>(ds.n()), static_cast<Eigen::Index>(grid.size()));
    res.diagnostics.folds.push_back(fold_diagnostics(0, *fit.pi, *fit.omega, 0));

    parallel_for(grid.size(), run.threads, [&](std::size_t j) {
        const double delta = grid[j];
        for (std::size_t i = 0; i < ds.n(); ++i) {
            const auto& tr = ds[i];
            StageNuisance v;
            for (int s = 1; s <= t; ++s) {
                v.pi.push_back(fit.pi->predictions[s - 1][i]);
                v.omega.push_back(fit.omega->predictions[s - 1][i]);
                v.m1.push_back(0.0);
                v.m0.push_back(0.0);
            }
            double value = 0.0;
            if (tr.retention[t]) {
                if (!tr.outcomes[t - 1])
                    throw PreconditionError("subject " + tr.subject_id + " is retained after t=" + std::to_string(t) +
                                            " but Y_" + std::to_string(t) + " is missing");
                value = cumulative_weight(tr, v, delta, t) * *tr.outcomes[t - 1];
            }
            res.eif.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = value;
        }
    });

    res.estimate = summarize(res.eif, "ipw");
    res.diagnostics.fully_weighted = count_fully_weighted(ds, t);
    collect_warnings(res.diagnostics);
    return res;
}

EstimationResult estimate_no_censoring(const PanelDataset& ds, int K, std::uint64_t seed, const NuisanceSpecs& specs,
                                       const DeltaGrid& grid, int t, const RunOptions& run) {
    check_horizon(ds, t);
    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < ds.n(); ++i)
        if (ds[i].retention[t]) kept.push_back(i);
    if (kept.size() < static_cast<std::size_t>(K))
        throw EstimandUndefined("only " + std::to_string(kept.size()) + " units are retained through t=" +
                                std::to_string(t));
    // Keep the first t stages so the retained subset has no later dropout to model.
    std::vector<Trajectory> trimmed;
    trimmed.reserve(kept.size());
    for (auto i : kept) {
        Trajectory tr = ds[i];
        tr.covariates.resize(t);
        tr.treatments.resize(t);
        tr.outcomes.resize(t);
        tr.retention.resize(t + 1);
        trimmed.push_back(std::move(tr));
    }
    const PanelDataset complete(std::move(trimmed), ds.d(), t);
    NuisanceSpecs nc = specs;
    nc.omega = LearnerSpec::from_oracle([](const OracleQuery&) { return 1.0; });
    auto res = estimate_cross_fit(complete, K, seed, nc, grid, t, run);
    res.estimate.kind = "no_censoring";
    return res;
}

double estimate_complete_case(const PanelDataset& ds, int t) {
    check_horizon(ds, t);
    double sum1 = 0, sum0 = 0;
    std::size_t n1 = 0, n0 = 0;
    for (const auto& tr : ds.trajectories()) {
        if (!tr.retention[t] || !tr.outcomes[t - 1]) continue;
        int treated = 0;
        for (int s = 1; s <= t; ++s) treated += tr.a(s);
        if (treated == t) {
            sum1 += *tr.outcomes[t - 1];
            ++n1;
        } else if (treated == 0) {
            sum0 += *tr.outcomes[t - 1];
            ++n0;
        }
    }
    if (n1 == 0 || n0 == 0)
        throw EstimandUndefined("complete-case contrast at t=" + std::to_string(t) + " needs retained always-treated (" +
                                std::to_string(n1) + ") and never-treated (" + std::to_string(n0) + ") units");
    return sum1 / static_cast<double>(n1) - sum0 / static_cast<double>(n0);
}

} // namespace increff
