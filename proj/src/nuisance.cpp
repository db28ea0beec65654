#include "increff/nuisance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "increff/errors.hpp"

namespace increff {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool requires_data(const LearnerSpec& spec) { return spec.kind != LearnerSpec::Kind::oracle; }

StageDiagnostics diagnose(int t, const FittedModel& m, Eigen::Index width) {
    StageDiagnostics d;
    d.t = t;
    d.n_train = m.info().n_train;
    d.iterations = m.info().iterations;
    d.converged = m.info().converged;
    d.constant = m.info().constant;
    d.underdetermined = !m.is_oracle() && d.n_train < static_cast<std::size_t>(std::max<Eigen::Index>(10, width + 2));
    return d;
}

void check_pool(const LearnerSpec& spec, Eigen::Index rows, int t, const char* what) {
    if (requires_data(spec) && rows < 2)
        throw FitError(std::string(what) + " at t=" + std::to_string(t) + ": training pool has " +
                       std::to_string(rows) + " unit(s), need at least 2");
}

std::vector<std::size_t> pool_units(const PanelDataset& ds, const TrainingPool& pool) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < ds.n(); ++i)
        if (pool.contains(i)) out.push_back(i);
    return out;
}

Eigen::VectorXd spread(const FeatureCache& cache, int t, const Eigen::VectorXd& rowwise) {
    Eigen::VectorXd out = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(cache.n()), kNaN);
    const auto& units = cache.units(t);
    for (std::size_t r = 0; r < units.size(); ++r) out[units[r]] = rowwise[r];
    return out;
}

Eigen::MatrixXd select_rows(const Eigen::MatrixXd& M, const std::vector<int>& rows) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), M.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) out.row(r) = M.row(rows[r]);
    return out;
}

void check_probabilities(const Eigen::VectorXd& v, int t, const char* what) {
    for (Eigen::Index i = 0; i < v.size(); ++i)
        if (!(v[i] >= 0.0 && v[i] <= 1.0))
            throw InvariantViolation(std::string(what) + " at t=" + std::to_string(t) + " predicted " +
                                     std::to_string(v[i]) + ", outside [0, 1]");
}

} // namespace

FeatureCache::FeatureCache(const PanelDataset& ds, int horizon) : horizon_(horizon), n_(ds.n()) {
    if (horizon < 1 || horizon > ds.T())
        throw PreconditionError("horizon " + std::to_string(horizon) + " outside 1.." + std::to_string(ds.T()));
    for (int t = 1; t <= horizon; ++t) {
        const auto y_times = history_outcome_times(ds, t);
        const int width = history_width(ds.d(), t, y_times.size());
        std::vector<std::size_t> units;
        std::vector<int> rows(ds.n(), -1);
        for (std::size_t i = 0; i < ds.n(); ++i)
            if (ds[i].retention[t - 1]) {
                rows[i] = static_cast<int>(units.size());
                units.push_back(i);
            }
        Eigen::MatrixXd H(static_cast<Eigen::Index>(units.size()), width);
        Eigen::VectorXd A(static_cast<Eigen::Index>(units.size()));
        for (std::size_t r = 0; r < units.size(); ++r) {
            const auto& tr = ds[units[r]];
            H.row(r) = history_at(tr, t).features().transpose();
            A[r] = tr.a(t);
        }
        hist_.push_back(std::move(H));
        units_.push_back(std::move(units));
        rows_.push_back(std::move(rows));
        treat_.push_back(std::move(A));
    }
}

Eigen::MatrixXd with_treatment(const Eigen::MatrixXd& history, const Eigen::VectorXd& a) {
    Eigen::MatrixXd out(history.rows(), history.cols() + 1);
    out.leftCols(history.cols()) = history;
    out.col(history.cols()) = a;
    return out;
}

Eigen::MatrixXd with_treatment(const Eigen::MatrixXd& history, double a) {
    return with_treatment(history, Eigen::VectorXd::Constant(history.rows(), a));
}

SequenceFit fit_propensity_sequence(const PanelDataset& ds, const FeatureCache& cache, const TrainingPool& pool,
                                    const LearnerSpec& spec, const NuisanceOptions& opts) {
    SequenceFit fit;
    fit.exclude_fold = pool.exclude_fold;
    fit.training_units = pool_units(ds, pool);
    for (int t = 1; t <= cache.horizon(); ++t) {
        const auto& units = cache.units(t);
        std::vector<int> rows;
        for (std::size_t r = 0; r < units.size(); ++r)
            if (pool.contains(units[r])) rows.push_back(static_cast<int>(r));
        check_pool(spec, static_cast<Eigen::Index>(rows.size()), t, "treatment propensity");
        const Eigen::MatrixXd X = select_rows(cache.history(t), rows);
        Eigen::VectorXd y(X.rows());
        for (std::size_t r = 0; r < rows.size(); ++r) y[r] = cache.treatment(t)[rows[r]];
        auto model = fit_learner(spec, X, y, Task::probability, opts.eps_clip, {t, cache.horizon(), 1.0});
        fit.stages.push_back(diagnose(t, model, X.cols()));
        Eigen::VectorXd pred = model.predict_rows(cache.history(t));
        check_probabilities(pred, t, "treatment propensity");
        pred = pred.cwiseMax(opts.eps_clip).cwiseMin(1.0 - opts.eps_clip);
        fit.predictions.push_back(spread(cache, t, pred));
        fit.models.push_back(std::move(model));
    }
    return fit;
}

SequenceFit fit_missingness_sequence(const PanelDataset& ds, const FeatureCache& cache, const TrainingPool& pool,
                                     const LearnerSpec& spec, const NuisanceOptions& opts) {
    SequenceFit fit;
    fit.exclude_fold = pool.exclude_fold;
    fit.training_units = pool_units(ds, pool);
    for (int t = 1; t <= cache.horizon(); ++t) {
        const auto& units = cache.units(t);
        std::vector<int> rows;
        for (std::size_t r = 0; r < units.size(); ++r)
            if (pool.contains(units[r])) rows.push_back(static_cast<int>(r));
        check_pool(spec, static_cast<Eigen::Index>(rows.size()), t, "retention propensity");
        const Eigen::MatrixXd HA = with_treatment(cache.history(t), cache.treatment(t));
        const Eigen::MatrixXd X = select_rows(HA, rows);
        Eigen::VectorXd y(X.rows());
        for (std::size_t r = 0; r < rows.size(); ++r) y[r] = ds[units[rows[r]]].retention[t];
        auto model = fit_learner(spec, X, y, Task::probability, opts.eps_clip, {t, cache.horizon(), 1.0});
        fit.stages.push_back(diagnose(t, model, X.cols()));
        Eigen::VectorXd pred = model.predict_rows(HA);
        check_probabilities(pred, t, "retention propensity");
        pred = pred.cwiseMax(opts.eps_omega).cwiseMin(1.0);
        fit.predictions.push_back(spread(cache, t, pred));
        fit.models.push_back(std::move(model));
    }
    return fit;
}

OutcomeFit fit_pseudo_outcome_sequence(const PanelDataset& ds, const FeatureCache& cache, const TrainingPool& pool,
                                       const SequenceFit& pi_hat, const LearnerSpec& spec, double delta,
                                       const NuisanceOptions& opts) {
    if (!(delta > 0.0) || !std::isfinite(delta)) throw DomainError("delta must be positive and finite");
    const int horizon = cache.horizon();
    if (static_cast<int>(pi_hat.predictions.size()) < horizon)
        throw PreconditionError("treatment propensities are not available up to the horizon");

    OutcomeFit fit;
    fit.delta = delta;
    fit.horizon = horizon;
    fit.exclude_fold = pool.exclude_fold;
    fit.training_units = pool_units(ds, pool);
    fit.models.resize(horizon);
    fit.stages.resize(horizon);
    fit.m1.resize(horizon);
    fit.m0.resize(horizon);

    // next[i] holds M_{t+1} for unit i (NaN where undefined).
    Eigen::VectorXd next = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(ds.n()), kNaN);
    for (std::size_t i = 0; i < ds.n(); ++i) {
        const auto& tr = ds[i];
        if (!tr.retention[horizon]) continue;
        if (!tr.outcomes[horizon - 1])
            throw DataError("subject " + tr.subject_id + " is retained after t=" + std::to_string(horizon) +
                            " but has no outcome at that time");
        next[i] = *tr.outcomes[horizon - 1];
    }

    for (int t = horizon; t >= 1; --t) {
        const auto& units = cache.units(t);
        std::vector<int> rows;
        for (std::size_t r = 0; r < units.size(); ++r) {
            const auto i = units[r];
            if (pool.contains(i) && ds[i].retention[t]) rows.push_back(static_cast<int>(r));
        }
        check_pool(spec, static_cast<Eigen::Index>(rows.size()), t, "outcome regression");
        const Eigen::MatrixXd HA = with_treatment(cache.history(t), cache.treatment(t));
        const Eigen::MatrixXd X = select_rows(HA, rows);
        Eigen::VectorXd y(X.rows());
        for (std::size_t r = 0; r < rows.size(); ++r) y[r] = next[units[rows[r]]];
        auto model = fit_learner(spec, X, y, Task::regression, opts.eps_clip, {t, horizon, delta});
        fit.stages[t - 1] = diagnose(t, model, X.cols());

        const Eigen::VectorXd m1 = model.predict_rows(with_treatment(cache.history(t), 1.0));
        const Eigen::VectorXd m0 = model.predict_rows(with_treatment(cache.history(t), 0.0));
        if (!m1.allFinite() || !m0.allFinite())
            throw InvariantViolation("outcome regression at t=" + std::to_string(t) + " produced non-finite values");
        fit.m1[t - 1] = spread(cache, t, m1);
        fit.m0[t - 1] = spread(cache, t, m0);
        fit.models[t - 1] = std::move(model);

        next.setConstant(kNaN);
        const auto& pi = pi_hat.predictions[t - 1];
        for (std::size_t r = 0; r < units.size(); ++r) {
            const auto i = units[r];
            const double p = pi[i];
            next[i] = (m1[r] * delta * p + m0[r] * (1.0 - p)) / (delta * p + 1.0 - p);
        }
    }
    return fit;
}

StageNuisance NuisanceSet::unit(std::size_t i) const {
    if (!pi_hat || !omega_hat || !m_hat) throw PreconditionError("nuisance set is incomplete");
    if (m_hat->delta != delta) throw PreconditionError("outcome regressions were fitted for a different delta");
    StageNuisance out;
    for (int s = 1; s <= horizon; ++s) {
        out.pi.push_back(pi_hat->predictions.at(s - 1)[i]);
        out.omega.push_back(omega_hat->predictions.at(s - 1)[i]);
        out.m1.push_back(m_hat->m1.at(s - 1)[i]);
        out.m0.push_back(m_hat->m0.at(s - 1)[i]);
    }
    return out;
}

} // namespace increff
