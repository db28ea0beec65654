#include "increff/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dgp_detail.hpp"
#include "increff/efficiency.hpp"
#include "increff/errors.hpp"
#include "increff/parallel.hpp"

namespace increff {

namespace {

double normal(Rng& rng) {
    std::normal_distribution<double> nd(0.0, 1.0);
    return nd(rng);
}

std::uint64_t kind_tag(DgpKind k) { return static_cast<std::uint64_t>(k) + 0x736d; }

Trajectory empty_trajectory(std::string id, int T) {
    Trajectory tr;
    tr.subject_id = std::move(id);
    tr.covariates.assign(T, std::nullopt);
    tr.treatments.assign(T, std::nullopt);
    tr.outcomes.assign(T, std::nullopt);
    tr.retention.assign(T + 1, 0);
    return tr;
}

Trajectory simulate_covariate_subject(Rng& rng, const DgpConfig& cfg, std::size_t index) {
    const int T = cfg.T;
    Trajectory tr = empty_trajectory(std::to_string(index + 1), T);
    const bool dropout = cfg.kind == DgpKind::dropout;
    const double c0 = dropout ? (cfg.u_l < 5.0 ? cfg.u_l + (5.0 - cfg.u_l) * uniform01(rng) : 5.0) : 0.0;
    std::optional<int> a1, a2;  // A_{t−1}, A_{t−2}
    double z = 0.0, z_prev = 0.0;
    int cum = 0;
    tr.retention[0] = 1;
    for (int t = 1; t <= T; ++t) {
        Eigen::VectorXd x(2);
        x[0] = normal(rng);
        x[1] = normal(rng);
        z_prev = z;
        z = x.sum();
        const int a = bernoulli(rng, detail::dropout_propensity(z, a1, a2));
        tr.covariates[t - 1] = std::move(x);
        tr.treatments[t - 1] = a;
        cum += a;
        const int keep = dropout ? bernoulli(rng, expit(c0 + cum)) : 1;
        tr.retention[t] = static_cast<std::uint8_t>(keep);
        if (t == T) {
            const double y = detail::dropout_outcome_mean(a, a1.value_or(0), z, z_prev) + normal(rng);
            if (keep) tr.outcomes[T - 1] = y;
        }
        if (!keep) break;
        a2 = a1;
        a1 = a;
    }
    return tr;
}

Trajectory simulate_trial_subject(Rng& rng, const DgpConfig& cfg, std::size_t index) {
    const int T = cfg.T;
    Trajectory tr = empty_trajectory(std::to_string(index + 1), T);
    int k = 0;
    for (int t = 1; t <= T; ++t) {
        const int a = bernoulli(rng, cfg.p);
        k += a;
        tr.covariates[t - 1] = Eigen::VectorXd(0);
        tr.treatments[t - 1] = a;
        tr.retention[t - 1] = 1;
    }
    tr.retention[T] = 1;
    tr.outcomes[T - 1] = truncated_normal(rng, 10.0 + std::sqrt(static_cast<double>(k)));
    return tr;
}

double sample_variance(const std::vector<double>& v) {
    const auto n = static_cast<double>(v.size());
    if (v.size() < 2) return 0.0;
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return ss / (n - 1.0);
}

/// Draw an index from unnormalized log-weights.
std::size_t draw_log_weights(Rng& rng, const std::vector<double>& logw) {
    const double top = *std::max_element(logw.begin(), logw.end());
    std::vector<double> w(logw.size());
    double total = 0.0;
    for (std::size_t j = 0; j < logw.size(); ++j) total += (w[j] = std::exp(logw[j] - top));
    double u = uniform01(rng) * total;
    for (std::size_t j = 0; j < w.size(); ++j) {
        if (u < w[j]) return j;
        u -= w[j];
    }
    return w.size() - 1;
}

double log_binom_pmf(int k, int n, double p) {
    if (p <= 0.0) return k == 0 ? 0.0 : -INFINITY;
    if (p >= 1.0) return k == n ? 0.0 : -INFINITY;
    return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) + k * std::log(p) +
           (n - k) * std::log1p(-p);
}

/// Treated counts of n trial units over t stages, conditional on at least one
/// always-treated and at least one never-treated unit (exact, no rejection of whole datasets).
std::vector<int> trial_counts_with_positivity(Rng& rng, int n, int t, double p) {
    if (n < 2) throw ConfigError("positivity conditioning needs n >= 2");
    const double a = std::pow(p, t);
    const double r = std::pow(1.0 - p, t) / (1.0 - a);  // P(never-treated | not always-treated)
    std::vector<double> logw;
    for (int k = 1; k <= n - 1; ++k) {
        const double none = r >= 1.0 ? -INFINITY : (n - k) * std::log1p(-r);
        logw.push_back(log_binom_pmf(k, n, a) + std::log1p(-std::exp(none)));
    }
    const int k1 = static_cast<int>(draw_log_weights(rng, logw)) + 1;
    const int rest = n - k1;
    int k0;
    if (r >= 1.0) {
        k0 = rest;
    } else {
        std::vector<double> lw0;
        for (int j = 1; j <= rest; ++j) lw0.push_back(log_binom_pmf(j, rest, r));
        k0 = static_cast<int>(draw_log_weights(rng, lw0)) + 1;
    }
    std::vector<int> counts;
    counts.reserve(n);
    counts.insert(counts.end(), k1, t);
    counts.insert(counts.end(), k0, 0);
    for (int u = 0; u < rest - k0; ++u) {
        int k;
        do {
            k = 0;
            for (int s = 0; s < t; ++s) k += bernoulli(rng, p);
        } while (k == 0 || k == t);
        counts.push_back(k);
    }
    return counts;
}

struct SingleDraw {
    double at = 0, nt = 0, inc = 0;
    bool has_at = false, has_nt = false;
};

SingleDraw trial_replicate(Rng& rng, const DgpConfig& cfg, int t, double delta, bool positivity) {
    std::vector<int> counts;
    if (positivity) {
        counts = trial_counts_with_positivity(rng, static_cast<int>(cfg.n), t, cfg.p);
    } else {
        counts.resize(cfg.n);
        for (auto& k : counts) {
            k = 0;
            for (int s = 0; s < t; ++s) k += bernoulli(rng, cfg.p);
        }
    }
    const double p = cfg.p;
    const double den = std::pow(delta * p + 1.0 - p, t);
    SingleDraw d;
    for (int k : counts) {
        const double y = truncated_normal(rng, 10.0 + std::sqrt(static_cast<double>(k)));
        if (k == t) {
            d.at += y / std::pow(p, t);
            d.has_at = true;
        }
        if (k == 0) {
            d.nt += y / std::pow(1.0 - p, t);
            d.has_nt = true;
        }
        d.inc += std::pow(delta, k) / den * y;
    }
    const auto n = static_cast<double>(counts.size());
    d.at /= n;
    d.nt /= n;
    d.inc /= n;
    return d;
}

SingleDraw observational_replicate(Rng& rng, const DgpConfig& cfg, int t, double delta) {
    SingleDraw d;
    for (std::size_t i = 0; i < cfg.n; ++i) {
        std::optional<int> a1, a2;
        double z = 0, z_prev = 0;
        double p_treated = 1.0, p_control = 1.0, ratio = 1.0;
        int k = 0, last = 0, prev = 0;
        for (int s = 1; s <= t; ++s) {
            z_prev = z;
            z = normal(rng) + normal(rng);
            const double pi = detail::dropout_propensity(z, a1, a2);
            const int a = bernoulli(rng, pi);
            p_treated *= pi;
            p_control *= 1.0 - pi;
            ratio *= density_ratio(a, pi, delta);
            k += a;
            prev = last;
            last = a;
            a2 = a1;
            a1 = a;
        }
        const double y = detail::dropout_outcome_mean(last, prev, z, z_prev) + normal(rng);
        if (k == t) {
            d.at += y / p_treated;
            d.has_at = true;
        }
        if (k == 0) {
            d.nt += y / p_control;
            d.has_nt = true;
        }
        d.inc += ratio * y;
    }
    const auto n = static_cast<double>(cfg.n);
    d.at /= n;
    d.nt /= n;
    d.inc /= n;
    return d;
}

} // namespace

std::string to_string(DgpKind k) {
    switch (k) {
    case DgpKind::dropout: return "dropout";
    case DgpKind::trial: return "trial";
    case DgpKind::observational: return "observational";
    }
    return "?";
}

DgpKind parse_dgp_kind(const std::string& s) {
    if (s == "dropout" || s == "dropout_sim") return DgpKind::dropout;
    if (s == "trial") return DgpKind::trial;
    if (s == "observational") return DgpKind::observational;
    throw ConfigError("unknown simulation kind '" + s + "' (expected dropout, trial or observational)");
}

void DgpConfig::validate() const {
    if (n < 1) throw ConfigError("n must be at least 1");
    if (T < 1) throw ConfigError("T must be at least 1");
    if (kind == DgpKind::dropout && !(u_l <= 5.0 && std::isfinite(u_l))) throw ConfigError("u_l must be finite and <= 5");
    if (kind == DgpKind::trial && !(p > 0.0 && p < 1.0)) throw ConfigError("p must lie in (0, 1)");
}

PanelDataset simulate(const DgpConfig& cfg) {
    cfg.validate();
    Rng rng = make_rng(cfg.seed, {kind_tag(cfg.kind)});
    std::vector<Trajectory> trajectories;
    trajectories.reserve(cfg.n);
    for (std::size_t i = 0; i < cfg.n; ++i)
        trajectories.push_back(cfg.kind == DgpKind::trial ? simulate_trial_subject(rng, cfg, i)
                                                          : simulate_covariate_subject(rng, cfg, i));
    return PanelDataset(std::move(trajectories), cfg.d(), cfg.T);
}

double dropout_fraction(const PanelDataset& ds) {
    std::size_t lost = 0;
    for (const auto& tr : ds.trajectories()) lost += tr.retention[ds.T()] ? 0 : 1;
    return static_cast<double>(lost) / static_cast<double>(ds.n());
}

double truncated_normal(Rng& rng, double mean) {
    double z;
    do {
        z = normal(rng);
    } while (std::abs(z) > 2.0);
    return mean + z;
}

double truncated_normal_variance() {
    const double phi2 = std::exp(-2.0) / std::sqrt(2.0 * M_PI);
    const double mass = std::erf(2.0 / std::sqrt(2.0));  // 2Φ(2) − 1
    return 1.0 - 4.0 * phi2 / mass;
}

TruthCurve true_psi_oracle(const DgpConfig& cfg, const DeltaGrid& grid, int t, std::size_t m, std::uint64_t seed,
                           int threads) {
    cfg.validate();
    if (t < 1) throw ConfigError("horizon must be at least 1");
    if (m < 2) throw ConfigError("truth needs at least two Monte Carlo draws");
    TruthCurve out;
    out.t = t;
    out.m = m;
    out.delta = grid.values;
    out.psi.assign(grid.size(), 0.0);
    out.se.assign(grid.size(), 0.0);
    parallel_for(grid.size(), threads, [&](std::size_t j) {
        const double delta = grid[j];
        Rng rng = make_rng(seed, {0x7472757468, kind_tag(cfg.kind), j});
        double sum = 0.0, sumsq = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            double y;
            if (cfg.kind == DgpKind::trial) {
                const double q = incremental_propensity(cfg.p, delta);
                int k = 0;
                for (int s = 1; s <= t; ++s) k += bernoulli(rng, q);
                y = truncated_normal(rng, 10.0 + std::sqrt(static_cast<double>(k)));
            } else {
                std::optional<int> a1, a2;
                double z = 0, z_prev = 0;
                int last = 0, prev = 0;
                for (int s = 1; s <= t; ++s) {
                    z_prev = z;
                    z = normal(rng) + normal(rng);
                    const double q = incremental_propensity(detail::dropout_propensity(z, a1, a2), delta);
                    const int a = bernoulli(rng, q);
                    prev = last;
                    last = a;
                    a2 = a1;
                    a1 = a;
                }
                y = detail::dropout_outcome_mean(last, prev, z, z_prev) + normal(rng);
            }
            sum += y;
            sumsq += y * y;
        }
        const double md = static_cast<double>(m);
        const double mean = sum / md;
        const double var = std::max(0.0, (sumsq - md * mean * mean) / (md - 1.0));
        out.psi[j] = mean;
        out.se[j] = std::sqrt(var / md);
    });
    return out;
}

double normalized_rmse(const Eigen::MatrixXd& estimates, const std::vector<double>& truths, double psi_bar,
                       bool take_sqrt) {
    if (psi_bar == 0.0 || !std::isfinite(psi_bar)) throw DomainError("normalizing mean must be finite and nonzero");
    if (static_cast<std::size_t>(estimates.cols()) != truths.size() || estimates.rows() < 1)
        throw PreconditionError("estimate matrix must be S × D with D matching the truths");
    double total = 0.0;
    for (Eigen::Index d = 0; d < estimates.cols(); ++d) {
        double inner = 0.0;
        for (Eigen::Index s = 0; s < estimates.rows(); ++s) {
            const double e = (estimates(s, d) - truths[d]) / psi_bar;
            inner += e * e;
        }
        total += inner / static_cast<double>(estimates.rows());
    }
    const double v = total / static_cast<double>(estimates.cols());
    return take_sqrt ? std::sqrt(v) : v;
}

BenchmarkResult run_benchmark(const BenchmarkConfig& cfg) {
    cfg.dgp.validate();
    if (cfg.S < 1) throw ConfigError("S must be at least 1");
    if (cfg.grid.size() == 0) throw ConfigError("delta grid is empty");
    const int T = cfg.dgp.T;
    BenchmarkResult res;
    res.estimators = {"cross_fit", "plugin", "ipw", "no_censoring"};
    res.truth = true_psi_oracle(cfg.dgp, cfg.grid, T, cfg.truth_m, derive_seed(cfg.seed, {0x7472}), cfg.threads);
    res.psi_bar = std::accumulate(res.truth.psi.begin(), res.truth.psi.end(), 0.0) /
                  static_cast<double>(res.truth.psi.size());

    const auto D = static_cast<Eigen::Index>(cfg.grid.size());
    for (const auto& name : res.estimators) res.estimates[name] = Eigen::MatrixXd(cfg.S, D);
    std::vector<double> dropout(cfg.S);
    std::vector<std::vector<std::string>> warnings(cfg.S);

    parallel_for(static_cast<std::size_t>(cfg.S), cfg.threads, [&](std::size_t s) {
        DgpConfig dgp = cfg.dgp;
        dgp.seed = derive_seed(cfg.seed, {0x726570, s});
        const PanelDataset ds = simulate(dgp);
        dropout[s] = dropout_fraction(ds);
        const std::uint64_t fold_seed = derive_seed(cfg.seed, {0x666f6c64, s});
        auto store = [&](const std::string& name, const EstimationResult& r) {
            for (Eigen::Index j = 0; j < D; ++j) res.estimates[name](static_cast<Eigen::Index>(s), j) = r.estimate.psi_hat[j];
            for (const auto& w : r.diagnostics.warnings)
                warnings[s].push_back("replicate " + std::to_string(s) + " " + name + ": " + w);
        };
        store("cross_fit", estimate_cross_fit(ds, cfg.K, fold_seed, cfg.specs, cfg.grid, T));
        store("plugin", estimate_plugin(ds, cfg.specs, cfg.grid, T));
        store("ipw", estimate_ipw(ds, cfg.specs, cfg.grid, T));
        store("no_censoring", estimate_no_censoring(ds, cfg.K, fold_seed, cfg.specs, cfg.grid, T));
    });

    for (const auto& name : res.estimators)
        res.rmse[name] = normalized_rmse(res.estimates[name], res.truth.psi, res.psi_bar, cfg.take_sqrt);
    res.dropout_pct = 100.0 * std::accumulate(dropout.begin(), dropout.end(), 0.0) / static_cast<double>(cfg.S);
    for (auto& w : warnings) res.warnings.insert(res.warnings.end(), w.begin(), w.end());
    return res;
}

RelativeEfficiencyResult relative_efficiency_mc(const DgpConfig& cfg, double delta, int t_from, int t_to, int reps,
                                                std::uint64_t seed, bool ensure_positivity, int threads) {
    cfg.validate();
    if (cfg.kind == DgpKind::dropout) throw ConfigError("relative efficiency runs need the trial or observational model");
    if (!(delta > 0.0)) throw DomainError("delta must be positive");
    if (t_from < 1 || t_to < t_from) throw ConfigError("horizon range must satisfy 1 <= from <= to");
    if (reps < 2) throw ConfigError("relative efficiency needs at least two replicates");
    constexpr int kMaxAttempts = 200;

    RelativeEfficiencyResult out;
    out.delta = delta;
    for (int t = t_from; t <= t_to; ++t) {
        std::vector<SingleDraw> draws(reps);
        std::vector<int> failures(reps, 0);
        parallel_for(static_cast<std::size_t>(reps), threads, [&](std::size_t r) {
            Rng rng = make_rng(seed, {0x7265, static_cast<std::uint64_t>(t), r});
            if (cfg.kind == DgpKind::trial) {
                draws[r] = trial_replicate(rng, cfg, t, delta, ensure_positivity);
                return;
            }
            for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
                draws[r] = observational_replicate(rng, cfg, t, delta);
                if (!ensure_positivity || (draws[r].has_at && draws[r].has_nt)) return;
            }
            failures[r] = 1;
        });
        RelativeEfficiencyPoint pt;
        pt.t = t;
        std::vector<double> at, nt, inc;
        for (const auto& d : draws) {
            at.push_back(d.at);
            nt.push_back(d.nt);
            inc.push_back(d.inc);
        }
        pt.var_at = sample_variance(at);
        pt.var_nt = sample_variance(nt);
        pt.var_inc = sample_variance(inc);
        pt.positivity_failures = static_cast<std::size_t>(std::accumulate(failures.begin(), failures.end(), 0));
        if (pt.var_inc == 0.0) {
            pt.excluded = true;
            pt.ratio_at = pt.ratio_nt = std::numeric_limits<double>::quiet_NaN();
            out.warnings.push_back("t=" + std::to_string(t) + ": zero variance of the incremental estimator; point excluded");
        } else {
            pt.ratio_at = pt.var_at / pt.var_inc;
            pt.ratio_nt = pt.var_nt / pt.var_inc;
        }
        if (pt.positivity_failures)
            out.warnings.push_back("t=" + std::to_string(t) + ": " + std::to_string(pt.positivity_failures) +
                                   " replicate(s) lack always- or never-treated units after " +
                                   std::to_string(kMaxAttempts) + " attempts");
        if (cfg.kind == DgpKind::trial) {
            const auto spec = trial_moments(cfg.p, delta, t);
            // The analytic bound caps Var(inc)/Var(ref) from above; its reciprocal bounds ratio_at from below.
            pt.lower_at = 1.0 / re_bounds(spec, Variant::always_treated).upper;
            pt.lower_nt = 1.0 / re_bounds(spec, Variant::never_treated).upper;
        } else {
            pt.lower_at = pt.lower_nt = std::numeric_limits<double>::quiet_NaN();
        }
        out.points.push_back(pt);
    }
    return out;
}

} // namespace increff
