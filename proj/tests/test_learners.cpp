#include <doctest.h>

#include <cmath>
#include <sstream>

#include "increff/errors.hpp"
#include "increff/learners.hpp"
#include "increff/nuisance.hpp"
#include "increff/rng.hpp"
#include "increff/simulation.hpp"

using namespace increff;

TEST_CASE("logistic with no signal predicts one half") {
    Eigen::MatrixXd X(8, 1);
    Eigen::VectorXd y(8);
    X << -1, -1, 1, 1, -2, -2, 2, 2;
    y << 0, 1, 0, 1, 0, 1, 0, 1;
    const auto m = fit_learner(LearnerSpec::logistic(), X, y, Task::probability);
    for (double x : {-3.0, -1.0, 0.0, 0.7, 5.0}) CHECK(std::abs(m.predict(Eigen::VectorXd::Constant(1, x)) - 0.5) < 1e-6);
    CHECK(m.info().converged);
}

TEST_CASE("logistic recovers known coefficients") {
    auto rng = make_rng(4);
    std::normal_distribution<double> normal;
    const int n = 20000;
    Eigen::MatrixXd X(n, 2);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        X(i, 0) = normal(rng);
        X(i, 1) = normal(rng);
        y[i] = bernoulli(rng, expit(0.5 + X(i, 0) - 0.7 * X(i, 1)));
    }
    const auto m = fit_learner(LearnerSpec::logistic(), X, y, Task::probability);
    const auto b = m.coefficients();
    CHECK(b[0] == doctest::Approx(0.5).epsilon(0.1));
    CHECK(b[1] == doctest::Approx(1.0).epsilon(0.1));
    CHECK(b[2] == doctest::Approx(-0.7).epsilon(0.1));
}

TEST_CASE("logistic on separable data stays within the clip") {
    Eigen::MatrixXd X(6, 1);
    Eigen::VectorXd y(6);
    X << -3, -2, -1, 1, 2, 3;
    y << 0, 0, 0, 1, 1, 1;
    const auto m = fit_learner(LearnerSpec::logistic(), X, y, Task::probability);
    const double lo = m.predict(Eigen::VectorXd::Constant(1, -10.0));
    const double hi = m.predict(Eigen::VectorXd::Constant(1, 10.0));
    CHECK(lo >= kDefaultClip);
    CHECK(hi <= 1 - kDefaultClip);
    CHECK(lo < 0.01);
    CHECK(hi > 0.99);
}

TEST_CASE("knn with k=1 interpolates") {
    auto rng = make_rng(8);
    Eigen::MatrixXd X(30, 3);
    Eigen::VectorXd y(30);
    for (int i = 0; i < 30; ++i) {
        for (int j = 0; j < 3; ++j) X(i, j) = uniform01(rng);
        y[i] = uniform01(rng) * 10;
    }
    const auto m = fit_learner(LearnerSpec::knn(1), X, y, Task::regression);
    for (int i = 0; i < 30; ++i) CHECK(m.predict(X.row(i).transpose()) == y[i]);
}

TEST_CASE("ridge without penalty solves least squares") {
    Eigen::MatrixXd X(7, 1);
    Eigen::VectorXd y(7);
    for (int i = 0; i < 7; ++i) {
        X(i, 0) = i - 2.5;
        y[i] = 2.0 * X(i, 0);
    }
    const auto m = fit_learner(LearnerSpec::ridge(0.0), X, y, Task::regression);
    CHECK(std::abs(m.coefficients()[1] - 2.0) < 1e-8);
    CHECK(std::abs(m.coefficients()[0]) < 1e-8);
}

TEST_CASE("ridge matches an independent normal-equation solve") {
    // Oracle: solve the standardized penalized system directly.
    auto rng = make_rng(12);
    std::normal_distribution<double> normal;
    const int n = 50, p = 3;
    Eigen::MatrixXd X(n, p);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < p; ++j) X(i, j) = normal(rng) * (j + 1) + j;
        y[i] = 1 + X(i, 0) - 2 * X(i, 2) + normal(rng);
    }
    const double lambda = 2.5;
    const Eigen::RowVectorXd mu = X.colwise().mean();
    Eigen::RowVectorXd sd(p);
    for (int j = 0; j < p; ++j) sd[j] = std::sqrt((X.col(j).array() - mu[j]).square().mean());
    Eigen::MatrixXd Z = (X.rowwise() - mu).array().rowwise() / sd.array();
    const Eigen::VectorXd yc = y.array() - y.mean();
    const Eigen::VectorXd beta_z =
        (Z.transpose() * Z + lambda * Eigen::MatrixXd::Identity(p, p)).ldlt().solve(Z.transpose() * yc);
    const Eigen::VectorXd beta = beta_z.array() / sd.transpose().array();
    const double intercept = y.mean() - mu.dot(beta);

    const auto m = fit_learner(LearnerSpec::ridge(lambda), X, y, Task::regression);
    const auto b = m.coefficients();
    CHECK(std::abs(b[0] - intercept) < 1e-9);
    for (int j = 0; j < p; ++j) CHECK(std::abs(b[j + 1] - beta[j]) < 1e-9);
}

TEST_CASE("oracle learners pass values through") {
    Eigen::MatrixXd X(2, 1);
    X << 1, 2;
    Eigen::VectorXd y(2);
    y << 0, 1;
    const auto spec = LearnerSpec::from_oracle([](const OracleQuery& q) { return q.features[0] * 1e-9; });
    const auto m = fit_learner(spec, X, y, Task::probability);
    CHECK(m.is_oracle());
    CHECK(m.predict(Eigen::VectorXd::Constant(1, 3.0)) == 3.0 * 1e-9);
}

TEST_CASE("learner names parse back") {
    CHECK(parse_learner("logistic").kind == LearnerSpec::Kind::logistic_irls);
    CHECK(parse_learner("knn:15").k == 15);
    CHECK(parse_learner("ridge:0.25").lambda == 0.25);
    CHECK_THROWS_AS(parse_learner("forest"), ConfigError);
    CHECK_THROWS_AS(parse_learner("knn:0"), ConfigError);
    Eigen::MatrixXd X(2, 1);
    X << 1, 2;
    Eigen::VectorXd y(2);
    y << 0.5, 1.5;
    CHECK_THROWS_AS(fit_learner(LearnerSpec::logistic(), X, y, Task::regression), ConfigError);
}

TEST_CASE("fitted propensities on the trial model") {
    DgpConfig cfg;
    cfg.kind = DgpKind::trial;
    cfg.n = 5000;
    cfg.T = 3;
    cfg.seed = 1;
    const auto ds = simulate(cfg);
    const FeatureCache cache(ds, 3);
    const auto fit = fit_propensity_sequence(ds, cache, TrainingPool::all(), LearnerSpec::logistic());
    for (int t = 1; t <= 3; ++t) CHECK(std::abs(fit.predictions[t - 1].mean() - 0.5) < 0.02);
}

TEST_CASE("oracle propensities equal the true ones") {
    DgpConfig cfg;
    cfg.kind = DgpKind::dropout;
    cfg.n = 200;
    cfg.T = 4;
    cfg.seed = 5;
    const auto ds = simulate(cfg);
    const auto specs = oracle_specs(cfg);
    const FeatureCache cache(ds, 4);
    const auto fit = fit_propensity_sequence(ds, cache, TrainingPool::all(), specs.pi);
    for (int t = 1; t <= 4; ++t)
        for (std::size_t i = 0; i < ds.n(); ++i) {
            if (!ds[i].retained(t)) continue;
            const auto& x = ds[i].x(t);
            double lag = 0;
            if (t >= 2) lag += 2 * (ds[i].a(t - 1) - 0.5);
            if (t >= 3) lag += 2 * (ds[i].a(t - 2) - 0.5);
            const double truth = expit(x.sum() + lag);
            CHECK(std::abs(fit.predictions[t - 1][i] - std::clamp(truth, 1e-6, 1 - 1e-6)) < 1e-14);
        }
}

namespace {

PanelDataset read(const std::string& s) {
    std::istringstream in(s);
    return read_long_csv(in);
}

} // namespace

TEST_CASE("single unit left in the pool is a fit error") {
    std::ostringstream s;
    s << "id,time,x1,a,y,r\n";
    for (int i = 0; i < 6; ++i) s << i << ",1," << i * 0.3 << "," << i % 2 << ",,1\n";
    s << "0,2,0.4,1,1.0,1\n";
    const auto ds = read(s.str());
    const FeatureCache cache(ds, 2);
    CHECK_THROWS_AS(fit_propensity_sequence(ds, cache, TrainingPool::all(), LearnerSpec::logistic()), FitError);
}

TEST_CASE("no dropout gives retention propensities near one") {
    DgpConfig cfg;
    cfg.kind = DgpKind::observational;
    cfg.n = 300;
    cfg.T = 3;
    cfg.seed = 2;
    const auto ds = simulate(cfg);
    const FeatureCache cache(ds, 3);
    const auto fit = fit_missingness_sequence(ds, cache, TrainingPool::all(), LearnerSpec::logistic());
    for (int t = 1; t <= 3; ++t) {
        CHECK(fit.stages[t - 1].constant);
        CHECK(fit.predictions[t - 1].minCoeff() >= 1 - 1e-6);
        CHECK(fit.predictions[t - 1].maxCoeff() <= 1.0);
    }
}

TEST_CASE("constant outcomes propagate through the recursion") {
    DgpConfig cfg;
    cfg.kind = DgpKind::dropout;
    cfg.n = 400;
    cfg.T = 3;
    cfg.seed = 9;
    const auto raw = simulate(cfg);
    std::vector<Trajectory> trs = raw.trajectories();
    for (auto& tr : trs)
        if (tr.outcomes[2]) tr.outcomes[2] = 7.25;
    const PanelDataset ds(trs, raw.d(), raw.T());
    const FeatureCache cache(ds, 3);
    const auto pi = fit_propensity_sequence(ds, cache, TrainingPool::all(), LearnerSpec::logistic());
    for (const auto& spec : {LearnerSpec::ridge(1.0), LearnerSpec::knn(5)}) {
        const auto m = fit_pseudo_outcome_sequence(ds, cache, TrainingPool::all(), pi, spec, 2.0);
        for (int t = 1; t <= 3; ++t)
            for (std::size_t i = 0; i < ds.n(); ++i) {
                if (!ds[i].retained(t)) continue;
                CHECK(std::abs(m.m1[t - 1][i] - 7.25) < 1e-12);
                CHECK(std::abs(m.m0[t - 1][i] - 7.25) < 1e-12);
            }
    }
}

TEST_CASE("pseudo-outcome tends to the untreated regression as delta shrinks") {
    DgpConfig cfg;
    cfg.kind = DgpKind::observational;
    cfg.n = 60;
    cfg.T = 2;
    cfg.seed = 31;
    const auto ds = simulate(cfg);
    const FeatureCache cache(ds, 2);
    const auto pi = fit_propensity_sequence(ds, cache, TrainingPool::all(), LearnerSpec::logistic());
    // k=1 interpolates, so m̂_1 at the observed A_1 is exactly the pseudo-outcome.
    const auto m = fit_pseudo_outcome_sequence(ds, cache, TrainingPool::all(), pi, LearnerSpec::knn(1), 1e-12);
    for (std::size_t i = 0; i < ds.n(); ++i) {
        const double fitted = ds[i].a(1) ? m.m1[0][i] : m.m0[0][i];
        CHECK(std::abs(fitted - m.m0[1][i]) < 1e-8);
    }
}

TEST_CASE("first-stage oracle regression is the conditional mean among the retained") {
    DgpConfig cfg;
    cfg.kind = DgpKind::observational;
    cfg.n = 50;
    cfg.T = 1;
    cfg.seed = 3;
    const auto ds = simulate(cfg);
    const auto specs = oracle_specs(cfg);
    const FeatureCache cache(ds, 1);
    const auto pi = fit_propensity_sequence(ds, cache, TrainingPool::all(), specs.pi);
    const auto m = fit_pseudo_outcome_sequence(ds, cache, TrainingPool::all(), pi, specs.m, 2.0);
    for (std::size_t i = 0; i < ds.n(); ++i) {
        const double z = ds[i].x(1).sum();
        // at T=1, X_0 := 0 and A_0 := 0
        CHECK(std::abs(m.m1[0][i] - (11.0 + std::abs(z))) < 1e-12);
        CHECK(std::abs(m.m0[0][i] - (10.0 + std::abs(z))) < 1e-12);
    }
}
