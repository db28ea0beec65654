#pragma once

#include <functional>
#include <memory>
#include <string>

#include <Eigen/Dense>

namespace increff {

enum class Task { probability, regression };

/// What an oracle learner is asked: the nuisance stage t, the target horizon, the δ
/// the regression belongs to (only meaningful for outcome regressions) and the
/// flattened feature vector, laid out as in HistoryView::features() with A_t appended
/// for regressions on (H_t, A_t).
struct OracleQuery {
    int t = 0;
    int horizon = 0;
    double delta = 1.0;
    const Eigen::VectorXd& features;
};

using OracleFn = std::function<double(const OracleQuery&)>;

/// Context passed to the oracle when a learner is "fitted".
struct FitContext {
    int t = 0;
    int horizon = 0;
    double delta = 1.0;
};

struct LearnerSpec {
    enum class Kind { logistic_irls, knn, ridge, oracle };

    Kind kind = Kind::logistic_irls;
    int k = 10;           // knn
    double lambda = 0.0;  // ridge
    OracleFn oracle;

    static LearnerSpec logistic() { return {}; }
    static LearnerSpec knn(int k);
    static LearnerSpec ridge(double lambda);
    static LearnerSpec from_oracle(OracleFn fn);

    std::string name() const;
};

/// Parse "logistic", "knn:15", "ridge:0.1"; oracles cannot be named from text.
LearnerSpec parse_learner(const std::string& text);

struct FitInfo {
    std::size_t n_train = 0;
    int iterations = 0;
    bool converged = true;
    bool constant = false;  // degenerate target handled by a constant model
};

/// Immutable fitted predictor. Probability-task predictions of learned models are
/// clipped to [eps_clip, 1 - eps_clip]; oracle predictions are passed through.
class FittedModel {
public:
    class Impl;

    FittedModel() = default;
    FittedModel(std::shared_ptr<const Impl> impl, Task task, double eps_clip, FitInfo info);

    double predict(const Eigen::VectorXd& x) const;
    Eigen::VectorXd predict_rows(const Eigen::MatrixXd& X) const;

    Task task() const noexcept { return task_; }
    const FitInfo& info() const noexcept { return info_; }
    bool valid() const noexcept { return static_cast<bool>(impl_); }
    bool is_oracle() const noexcept;

    /// Raw-scale linear coefficients (intercept first) for logistic and ridge models.
    Eigen::VectorXd coefficients() const;

private:
    std::shared_ptr<const Impl> impl_;
    Task task_ = Task::regression;
    double eps_clip_ = 0.0;
    FitInfo info_;
};

constexpr double kDefaultClip = 1e-6;

/// Rows of `features` are training examples. Probability tasks need 0/1 targets.
FittedModel fit_learner(const LearnerSpec& spec, const Eigen::MatrixXd& features, const Eigen::VectorXd& targets,
                        Task task, double eps_clip = kDefaultClip, const FitContext& context = {});

double expit(double x);

} // namespace increff
