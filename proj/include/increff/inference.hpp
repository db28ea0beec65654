#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "increff/estimator.hpp"

namespace increff {

/// σ̂²(δ) = mean over rows of (φ − ψ̂)², computed in two passes.
std::vector<double> estimate_variance(const EifMatrix& eif, const EffectEstimate& psi);

double normal_quantile(double p);

struct Interval {
    std::vector<double> lo, hi;
};

/// ψ̂ ± z_{1−α/2} σ̂ / √n.
Interval pointwise_interval(const std::vector<double>& psi, const std::vector<double>& sigma, std::size_t n,
                            double alpha);

/// sup_δ |P_n[ξ(φ − ψ̂)]| √n / σ̂ for b = 0..B−1 with Rademacher ξ drawn from the
/// stream (seed, b). Columns with σ̂ = 0 are skipped and listed in `excluded`.
struct BootstrapDraws {
    std::vector<double> sup;
    std::vector<std::size_t> excluded;
    std::uint64_t seed = 0;
};

BootstrapDraws bootstrap_sup(const Eigen::MatrixXd& phi, const std::vector<double>& psi,
                             const std::vector<double>& sigma, int B, std::uint64_t seed, int threads = 1);

/// Empirical (1−α) quantile of the sup statistics: the ⌈(1−α)B⌉-th smallest value.
double bootstrap_quantile(const std::vector<double>& sup, double alpha);

struct ConfidenceBand {
    double alpha = 0.05;
    std::vector<double> delta, psi_hat;
    std::vector<double> pw_lo, pw_hi;
    std::vector<double> unif_lo, unif_hi;
    double c_alpha = 0.0;            // critical value used for the uniform band
    double c_alpha_bootstrap = 0.0;  // raw bootstrap quantile before flooring at z_{1−α/2}
    double z = 0.0;
    int B = 0;
    std::uint64_t seed = 0;
    std::vector<std::string> warnings;
};

/// Band from precomputed draws; lets several α share one draw set.
ConfidenceBand band_from_draws(const EffectEstimate& est, const BootstrapDraws& draws, double alpha, int B);

ConfidenceBand uniform_band(const EifMatrix& eif, const EffectEstimate& est, double alpha, int B, std::uint64_t seed,
                            int threads = 1);

/// Uniform band over δ and several horizons jointly: the sup runs over every column of
/// every matrix. All matrices must describe the same units in the same order.
std::vector<ConfidenceBand> uniform_band_pooled(const std::vector<EifMatrix>& eifs,
                                                const std::vector<EffectEstimate>& ests, double alpha, int B,
                                                std::uint64_t seed, int threads = 1);

} // namespace increff
