#include "increff/inference.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <boost/math/distributions/normal.hpp>

#include "increff/errors.hpp"
#include "increff/parallel.hpp"
#include "increff/rng.hpp"

namespace increff {

std::vector<double> estimate_variance(const EifMatrix& eif, const EffectEstimate& psi) {
    const auto n = eif.values.rows();
    if (n < 2) throw PreconditionError("variance needs at least two units");
    if (psi.psi_hat.size() != static_cast<std::size_t>(eif.values.cols()))
        throw PreconditionError("estimate and influence matrix have different grids");
    std::vector<double> out(psi.psi_hat.size());
    for (Eigen::Index j = 0; j < eif.values.cols(); ++j) {
        double ss = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double d = eif.values(i, j) - psi.psi_hat[j];
            ss += d * d;
        }
        out[j] = ss / static_cast<double>(n);
    }
    return out;
}

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw DomainError("normal quantile needs p in (0, 1)");
    return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

Interval pointwise_interval(const std::vector<double>& psi, const std::vector<double>& sigma, std::size_t n,
                            double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
    if (psi.size() != sigma.size()) throw PreconditionError("psi and sigma lengths differ");
    if (n == 0) throw PreconditionError("sample size must be positive");
    const double z = normal_quantile(1.0 - alpha / 2.0);
    Interval iv;
    for (std::size_t j = 0; j < psi.size(); ++j) {
        const double half = z * sigma[j] / std::sqrt(static_cast<double>(n));
        iv.lo.push_back(psi[j] - half);
        iv.hi.push_back(psi[j] + half);
    }
    return iv;
}

BootstrapDraws bootstrap_sup(const Eigen::MatrixXd& phi, const std::vector<double>& psi,
                             const std::vector<double>& sigma, int B, std::uint64_t seed, int threads) {
    if (B < 1) throw ConfigError("bootstrap needs B >= 1");
    const auto n = phi.rows();
    const auto J = phi.cols();
    if (static_cast<std::size_t>(J) != psi.size() || psi.size() != sigma.size())
        throw PreconditionError("bootstrap inputs have inconsistent widths");
    BootstrapDraws out;
    out.seed = seed;
    std::vector<Eigen::Index> active;
    for (Eigen::Index j = 0; j < J; ++j) {
        if (sigma[j] > 0.0)
            active.push_back(j);
        else
            out.excluded.push_back(static_cast<std::size_t>(j));
    }
    Eigen::MatrixXd centered(n, static_cast<Eigen::Index>(active.size()));
    for (std::size_t c = 0; c < active.size(); ++c)
        centered.col(c) = phi.col(active[c]).array() - psi[active[c]];
    std::vector<double> scale(active.size());
    for (std::size_t c = 0; c < active.size(); ++c)
        scale[c] = 1.0 / (std::sqrt(static_cast<double>(n)) * sigma[active[c]]);

    out.sup.assign(B, 0.0);
    parallel_for(static_cast<std::size_t>(B), threads, [&](std::size_t b) {
        Rng rng = make_rng(seed, {0x626f6f74, b});
        Eigen::VectorXd xi(n);
        std::uint64_t bits = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (i % 64 == 0) bits = rng();
            xi[i] = (bits & 1) ? 1.0 : -1.0;
            bits >>= 1;
        }
        double best = 0.0;
        for (std::size_t c = 0; c < active.size(); ++c) {
            // |Σ ξ (φ − ψ̂)| / n · √n / σ̂
            const double stat = std::abs(xi.dot(centered.col(c))) * scale[c];
            best = std::max(best, stat);
        }
        out.sup[b] = best;
    });
    return out;
}

double bootstrap_quantile(const std::vector<double>& sup, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
    if (sup.empty()) throw PreconditionError("no bootstrap draws");
    std::vector<double> sorted = sup;
    std::sort(sorted.begin(), sorted.end());
    const auto B = sorted.size();
    auto rank = static_cast<std::size_t>(std::ceil((1.0 - alpha) * static_cast<double>(B) - 1e-9));
    rank = std::clamp<std::size_t>(rank, 1, B);
    return sorted[rank - 1];
}

ConfidenceBand band_from_draws(const EffectEstimate& est, const BootstrapDraws& draws, double alpha, int B) {
    ConfidenceBand band;
    band.alpha = alpha;
    band.delta = est.delta;
    band.psi_hat = est.psi_hat;
    band.B = B;
    band.seed = draws.seed;
    band.z = normal_quantile(1.0 - alpha / 2.0);
    const auto pw = pointwise_interval(est.psi_hat, est.sigma_hat, est.n, alpha);
    band.pw_lo = pw.lo;
    band.pw_hi = pw.hi;
    for (auto j : draws.excluded) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "sigma_hat is zero at delta=%.17g; excluded from the supremum", est.delta.at(j));
        band.warnings.emplace_back(buf);
    }
    const bool degenerate = !draws.excluded.empty() &&
                            std::all_of(draws.sup.begin(), draws.sup.end(), [](double v) { return v == 0.0; });
    if (degenerate) {
        band.warnings.emplace_back("every column has zero variance; critical value set to the normal quantile");
        band.c_alpha_bootstrap = band.z;
    } else {
        band.c_alpha_bootstrap = bootstrap_quantile(draws.sup, alpha);
    }
    // The uniform band never undercuts the pointwise one.
    band.c_alpha = std::max(band.c_alpha_bootstrap, band.z);
    const double root_n = std::sqrt(static_cast<double>(est.n));
    for (std::size_t j = 0; j < est.psi_hat.size(); ++j) {
        const double half = band.c_alpha * est.sigma_hat[j] / root_n;
        band.unif_lo.push_back(est.psi_hat[j] - half);
        band.unif_hi.push_back(est.psi_hat[j] + half);
    }
    return band;
}

ConfidenceBand uniform_band(const EifMatrix& eif, const EffectEstimate& est, double alpha, int B, std::uint64_t seed,
                            int threads) {
    if (B < 100) throw ConfigError("uniform band needs B >= 100");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
    const auto draws = bootstrap_sup(eif.values, est.psi_hat, est.sigma_hat, B, seed, threads);
    return band_from_draws(est, draws, alpha, B);
}

std::vector<ConfidenceBand> uniform_band_pooled(const std::vector<EifMatrix>& eifs,
                                                const std::vector<EffectEstimate>& ests, double alpha, int B,
                                                std::uint64_t seed, int threads) {
    if (B < 100) throw ConfigError("uniform band needs B >= 100");
    if (eifs.empty() || eifs.size() != ests.size()) throw PreconditionError("pooled band inputs do not match");
    const auto n = eifs.front().values.rows();
    Eigen::Index width = 0;
    for (const auto& e : eifs) {
        if (e.values.rows() != n) throw PreconditionError("pooled horizons must share the same units");
        width += e.values.cols();
    }
    Eigen::MatrixXd phi(n, width);
    std::vector<double> psi, sigma;
    Eigen::Index col = 0;
    for (std::size_t h = 0; h < eifs.size(); ++h) {
        phi.middleCols(col, eifs[h].values.cols()) = eifs[h].values;
        col += eifs[h].values.cols();
        psi.insert(psi.end(), ests[h].psi_hat.begin(), ests[h].psi_hat.end());
        sigma.insert(sigma.end(), ests[h].sigma_hat.begin(), ests[h].sigma_hat.end());
    }
    auto draws = bootstrap_sup(phi, psi, sigma, B, seed, threads);
    std::vector<ConfidenceBand> out;
    std::size_t offset = 0;
    for (const auto& est : ests) {
        BootstrapDraws local;
        local.sup = draws.sup;
        local.seed = seed;
        for (auto j : draws.excluded)
            if (j >= offset && j < offset + est.delta.size()) local.excluded.push_back(j - offset);
        offset += est.delta.size();
        out.push_back(band_from_draws(est, local, alpha, B));
    }
    return out;
}

} // namespace increff
