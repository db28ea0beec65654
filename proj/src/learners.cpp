#include "increff/learners.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "increff/errors.hpp"

namespace increff {

double expit(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

class FittedModel::Impl {
public:
    virtual ~Impl() = default;
    virtual double raw(const Eigen::VectorXd& x) const = 0;
    virtual bool oracle() const { return false; }
    virtual Eigen::VectorXd coefficients() const {
        throw PreconditionError("model has no linear coefficients");
    }
};

namespace {

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

struct Standardizer {
    Eigen::VectorXd mean, scale;

    explicit Standardizer(const Eigen::MatrixXd& X) {
        const auto n = static_cast<double>(X.rows());
        mean = X.colwise().mean().transpose();
        scale.resize(X.cols());
        for (Eigen::Index j = 0; j < X.cols(); ++j) {
            const double var = (X.col(j).array() - mean[j]).square().sum() / n;
            scale[j] = var > 0 ? std::sqrt(var) : 1.0;
        }
    }
    Eigen::MatrixXd apply(const Eigen::MatrixXd& X) const {
        return (X.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
    }
    Eigen::VectorXd apply(const Eigen::VectorXd& x) const { return (x - mean).cwiseQuotient(scale); }
};

bool all_equal(const Eigen::VectorXd& v) {
    return v.size() == 0 || (v.array() == v[0]).all();
}

Eigen::VectorXd solve_spd(Eigen::MatrixXd A, const Eigen::VectorXd& b, double jitter) {
    A.diagonal().array() += jitter;
    for (int attempt = 0; attempt < 12; ++attempt) {
        Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
        if (ldlt.info() == Eigen::Success) {
            Eigen::VectorXd x = ldlt.solve(b);
            if (x.allFinite()) return x;
        }
        A.diagonal().array() += jitter * std::pow(100.0, attempt + 1);
    }
    throw FitError("normal equations could not be solved");
}

class ConstantImpl final : public FittedModel::Impl {
public:
    explicit ConstantImpl(double c) : c_(c) {}
    double raw(const Eigen::VectorXd&) const override { return c_; }

private:
    double c_;
};

class LinearImpl final : public FittedModel::Impl {
public:
    LinearImpl(Eigen::VectorXd beta, bool logistic) : beta_(std::move(beta)), logistic_(logistic) {}
    double raw(const Eigen::VectorXd& x) const override {
        if (x.size() + 1 != beta_.size())
            throw PreconditionError("feature width " + std::to_string(x.size()) + " does not match model width " +
                                    std::to_string(beta_.size() - 1));
        const double eta = beta_[0] + beta_.tail(beta_.size() - 1).dot(x);
        return logistic_ ? expit(eta) : eta;
    }
    Eigen::VectorXd coefficients() const override { return beta_; }

private:
    Eigen::VectorXd beta_;
    bool logistic_;
};

class KnnImpl final : public FittedModel::Impl {
public:
    KnnImpl(const Eigen::MatrixXd& X, Eigen::VectorXd y, int k)
        : std_(X), Z_(std_.apply(X)), y_(std::move(y)), k_(std::min<Eigen::Index>(k, X.rows())) {}

    double raw(const Eigen::VectorXd& x) const override {
        if (x.size() != Z_.cols()) throw PreconditionError("feature width does not match knn model");
        const Eigen::VectorXd z = std_.apply(x);
        const Eigen::VectorXd dist = (Z_.rowwise() - z.transpose()).rowwise().squaredNorm();
        std::vector<Eigen::Index> idx(static_cast<std::size_t>(Z_.rows()));
        std::iota(idx.begin(), idx.end(), Eigen::Index{0});
        auto closer = [&](Eigen::Index a, Eigen::Index b) { return dist[a] < dist[b] || (dist[a] == dist[b] && a < b); };
        std::partial_sort(idx.begin(), idx.begin() + k_, idx.end(), closer);
        const double first = y_[idx[0]];
        bool same = true;
        double sum = 0;
        for (Eigen::Index j = 0; j < k_; ++j) {
            sum += y_[idx[j]];
            same = same && y_[idx[j]] == first;
        }
        return same ? first : sum / static_cast<double>(k_);
    }

private:
    Standardizer std_;
    Eigen::MatrixXd Z_;
    Eigen::VectorXd y_;
    Eigen::Index k_;
};

class OracleImpl final : public FittedModel::Impl {
public:
    OracleImpl(OracleFn fn, FitContext ctx) : fn_(std::move(fn)), ctx_(ctx) {}
    double raw(const Eigen::VectorXd& x) const override {
        const double v = fn_(OracleQuery{ctx_.t, ctx_.horizon, ctx_.delta, x});
        if (!std::isfinite(v)) throw InvariantViolation("oracle returned a non-finite value");
        return v;
    }
    bool oracle() const override { return true; }

private:
    OracleFn fn_;
    FitContext ctx_;
};

struct IrlsResult {
    Eigen::VectorXd beta;
    int iterations;
    bool converged;
};

IrlsResult irls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    const Eigen::Index n = X.rows();
    const Eigen::Index p = X.cols() + 1;
    Eigen::MatrixXd D(n, p);
    D.col(0).setOnes();
    D.rightCols(p - 1) = X;
    const double inv_n = 1.0 / static_cast<double>(n);

    auto loglik = [&](const Eigen::VectorXd& eta) {
        double ll = 0;
        for (Eigen::Index i = 0; i < n; ++i) ll += y[i] * eta[i] - softplus(eta[i]);
        return ll * inv_n;
    };

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    const double ybar = y.mean();
    beta[0] = std::log(ybar / (1.0 - ybar));
    Eigen::VectorXd eta = D * beta;
    double ll = loglik(eta);
    for (int iter = 1; iter <= 100; ++iter) {
        Eigen::VectorXd mu = eta.unaryExpr([](double e) { return expit(e); });
        const Eigen::VectorXd grad = D.transpose() * (y - mu) * inv_n;
        if (grad.lpNorm<Eigen::Infinity>() < 1e-8) return {beta, iter - 1, true};
        const Eigen::VectorXd w = mu.array() * (1.0 - mu.array());
        const Eigen::MatrixXd H = D.transpose() * w.asDiagonal() * D * inv_n;
        const Eigen::VectorXd step = solve_spd(H, grad, 1e-10);
        double scale = 1.0;
        bool improved = false;
        for (int half = 0; half < 40; ++half, scale *= 0.5) {
            Eigen::VectorXd cand = beta + scale * step;
            Eigen::VectorXd cand_eta = D * cand;
            const double cand_ll = loglik(cand_eta);
            if (std::isfinite(cand_ll) && cand_ll >= ll - 1e-14) {
                beta = std::move(cand);
                eta = std::move(cand_eta);
                improved = cand_ll > ll;
                ll = cand_ll;
                break;
            }
        }
        if (!improved) {
            // No further ascent is possible at working precision.
            mu = eta.unaryExpr([](double e) { return expit(e); });
            const bool ok = (D.transpose() * (y - mu) * inv_n).lpNorm<Eigen::Infinity>() < 1e-8;
            return {beta, iter, ok};
        }
    }
    const Eigen::VectorXd mu = eta.unaryExpr([](double e) { return expit(e); });
    return {beta, 100, (D.transpose() * (y - mu) * inv_n).lpNorm<Eigen::Infinity>() < 1e-8};
}

Eigen::VectorXd ridge_solve(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda) {
    const Standardizer st(X);
    const Eigen::MatrixXd Z = st.apply(X);
    const double ybar = y.mean();
    const Eigen::VectorXd yc = y.array() - ybar;
    Eigen::MatrixXd A = Z.transpose() * Z;
    A.diagonal().array() += lambda;
    const Eigen::VectorXd b = Z.cols() ? solve_spd(A, Z.transpose() * yc, 1e-10) : Eigen::VectorXd();
    Eigen::VectorXd beta(X.cols() + 1);
    const Eigen::VectorXd raw = b.cwiseQuotient(st.scale);
    beta[0] = ybar - raw.dot(st.mean);
    beta.tail(X.cols()) = raw;
    return beta;
}

} // namespace

LearnerSpec LearnerSpec::knn(int k) {
    if (k < 1) throw ConfigError("knn needs k >= 1");
    LearnerSpec s;
    s.kind = Kind::knn;
    s.k = k;
    return s;
}

LearnerSpec LearnerSpec::ridge(double lambda) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("ridge needs a finite lambda >= 0");
    LearnerSpec s;
    s.kind = Kind::ridge;
    s.lambda = lambda;
    return s;
}

LearnerSpec LearnerSpec::from_oracle(OracleFn fn) {
    if (!fn) throw ConfigError("oracle learner needs a function");
    LearnerSpec s;
    s.kind = Kind::oracle;
    s.oracle = std::move(fn);
    return s;
}

std::string LearnerSpec::name() const {
    switch (kind) {
    case Kind::logistic_irls: return "logistic";
    case Kind::knn: return "knn:" + std::to_string(k);
    case Kind::ridge: {
        char buf[40];
        std::snprintf(buf, sizeof buf, "ridge:%.17g", lambda);
        return buf;
    }
    case Kind::oracle: return "oracle";
    }
    return "?";
}

LearnerSpec parse_learner(const std::string& text) {
    const auto colon = text.find(':');
    const std::string head = text.substr(0, colon);
    const std::string arg = colon == std::string::npos ? "" : text.substr(colon + 1);
    try {
        if (head == "logistic" || head == "logistic_irls") {
            if (!arg.empty()) throw ConfigError("logistic takes no parameter");
            return LearnerSpec::logistic();
        }
        if (head == "knn") return LearnerSpec::knn(arg.empty() ? 10 : std::stoi(arg));
        if (head == "ridge") return LearnerSpec::ridge(arg.empty() ? 0.0 : std::stod(arg));
    } catch (const std::logic_error&) {
        throw ConfigError("bad learner parameter in '" + text + "'");
    }
    throw ConfigError("unknown learner '" + text + "' (expected logistic, knn:K or ridge:LAMBDA)");
}

FittedModel::FittedModel(std::shared_ptr<const Impl> impl, Task task, double eps_clip, FitInfo info)
    : impl_(std::move(impl)), task_(task), eps_clip_(eps_clip), info_(info) {}

double FittedModel::predict(const Eigen::VectorXd& x) const {
    if (!impl_) throw PreconditionError("model has not been fitted");
    const double v = impl_->raw(x);
    if (task_ == Task::probability && !impl_->oracle()) return std::clamp(v, eps_clip_, 1.0 - eps_clip_);
    return v;
}

Eigen::VectorXd FittedModel::predict_rows(const Eigen::MatrixXd& X) const {
    Eigen::VectorXd out(X.rows());
    Eigen::VectorXd row(X.cols());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        row = X.row(i).transpose();
        out[i] = predict(row);
    }
    return out;
}

bool FittedModel::is_oracle() const noexcept { return impl_ && impl_->oracle(); }

Eigen::VectorXd FittedModel::coefficients() const {
    if (!impl_) throw PreconditionError("model has not been fitted");
    return impl_->coefficients();
}

FittedModel fit_learner(const LearnerSpec& spec, const Eigen::MatrixXd& features, const Eigen::VectorXd& targets,
                        Task task, double eps_clip, const FitContext& context) {
    if (!(eps_clip >= 0.0 && eps_clip < 0.5)) throw ConfigError("clip level must lie in [0, 0.5)");
    FitInfo info;
    info.n_train = static_cast<std::size_t>(targets.size());
    if (spec.kind == LearnerSpec::Kind::oracle) {
        if (!spec.oracle) throw ConfigError("oracle learner without a function");
        return FittedModel(std::make_shared<OracleImpl>(spec.oracle, context), task, eps_clip, info);
    }
    if (features.rows() != targets.size())
        throw PreconditionError("feature rows (" + std::to_string(features.rows()) + ") and targets (" +
                                std::to_string(targets.size()) + ") differ");
    if (targets.size() < 1) throw FitError("no training rows");
    if (!features.allFinite() || !targets.allFinite()) throw FitError("training data contain non-finite values");
    if (task == Task::probability) {
        for (Eigen::Index i = 0; i < targets.size(); ++i)
            if (targets[i] != 0.0 && targets[i] != 1.0) throw PreconditionError("probability targets must be 0 or 1");
    }

    if (all_equal(targets)) {
        info.constant = true;
        return FittedModel(std::make_shared<ConstantImpl>(targets[0]), task, eps_clip, info);
    }

    switch (spec.kind) {
    case LearnerSpec::Kind::logistic_irls: {
        if (task != Task::probability) throw ConfigError("logistic learner only fits probability targets");
        auto res = irls(features, targets);
        info.iterations = res.iterations;
        info.converged = res.converged;
        return FittedModel(std::make_shared<LinearImpl>(std::move(res.beta), true), task, eps_clip, info);
    }
    case LearnerSpec::Kind::ridge:
        return FittedModel(std::make_shared<LinearImpl>(ridge_solve(features, targets, spec.lambda), false), task,
                           eps_clip, info);
    case LearnerSpec::Kind::knn:
        if (spec.k < 1) throw ConfigError("knn needs k >= 1");
        return FittedModel(std::make_shared<KnnImpl>(features, targets, spec.k), task, eps_clip, info);
    case LearnerSpec::Kind::oracle: break;
    }
    throw ConfigError("unsupported learner");
}

} // namespace increff
