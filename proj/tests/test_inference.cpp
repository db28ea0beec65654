#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "increff/errors.hpp"
#include "increff/estimator.hpp"
#include "increff/inference.hpp"
#include "increff/rng.hpp"

using namespace increff;

namespace {

EifMatrix matrix(const Eigen::MatrixXd& values, std::vector<double> deltas) {
    EifMatrix m;
    m.values = values;
    m.t = 1;
    m.grid = grid_from_values(std::move(deltas));
    m.fold.assign(values.rows(), 0);
    return m;
}

Eigen::MatrixXd random_eif(std::size_t n, int J, std::uint64_t seed, double rho = 0.9) {
    auto rng = make_rng(seed);
    std::normal_distribution<double> normal;
    Eigen::MatrixXd M(n, J);
    for (std::size_t i = 0; i < n; ++i) {
        double prev = normal(rng);
        for (int j = 0; j < J; ++j) {
            prev = rho * prev + std::sqrt(1 - rho * rho) * normal(rng);
            M(i, j) = 3.0 + j * 0.1 + prev;
        }
    }
    return M;
}

std::vector<double> grid_values(int J) {
    std::vector<double> v;
    for (int j = 0; j < J; ++j) v.push_back(0.5 + j);
    return v;
}

} // namespace

TEST_CASE("variance examples") {
    Eigen::MatrixXd same = Eigen::MatrixXd::Constant(5, 1, 2.5);
    const auto eif = matrix(same, {1.0});
    CHECK(estimate_variance(eif, summarize(eif, "x"))[0] == 0.0);

    Eigen::MatrixXd two(2, 1);
    two << 0, 2;
    const auto e2 = matrix(two, {1.0});
    CHECK(estimate_variance(e2, summarize(e2, "x"))[0] == 1.0);

    CHECK_THROWS_AS(estimate_variance(matrix(Eigen::MatrixXd::Zero(1, 1), {1.0}), EffectEstimate{"", 1, 1, {1.0}, {0.0}, {}, {}, {}}),
                    PreconditionError);
}

TEST_CASE("property: variance agrees with a naive reference") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto M = random_eif(50 + seed * 13, 3, seed);
        const auto eif = matrix(M, grid_values(3));
        const auto est = summarize(eif, "x");
        const auto v = estimate_variance(eif, est);
        for (int j = 0; j < 3; ++j) {
            // E[φ²] − (Eφ)² in long double as the reference
            long double s = 0, s2 = 0;
            for (Eigen::Index i = 0; i < M.rows(); ++i) {
                s += M(i, j);
                s2 += static_cast<long double>(M(i, j)) * M(i, j);
            }
            const long double mean = s / M.rows();
            const double ref = static_cast<double>(s2 / M.rows() - mean * mean);
            CHECK(std::abs(v[j] - ref) < 1e-12 * (1 + ref) * 100);
            CHECK(est.sigma_hat[j] == doctest::Approx(std::sqrt(v[j])).epsilon(1e-15));
        }
    }
}

TEST_CASE("pointwise intervals") {
    const auto deg = pointwise_interval({4.0}, {0.0}, 10, 0.05);
    CHECK(deg.lo[0] == 4.0);
    CHECK(deg.hi[0] == 4.0);
    const auto iv = pointwise_interval({0.0}, {1.0}, 100, 0.05);
    CHECK(iv.hi[0] == doctest::Approx(0.1959963984540054).epsilon(1e-12));
    const auto iv4 = pointwise_interval({0.0}, {1.0}, 400, 0.05);
    CHECK((iv4.hi[0] - iv4.lo[0]) * 2 == doctest::Approx(iv.hi[0] - iv.lo[0]).epsilon(1e-14));
    CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-14));
}

TEST_CASE("bootstrap quantile is an order statistic") {
    std::vector<double> sup;
    for (int i = 100; i >= 1; --i) sup.push_back(i);
    CHECK(bootstrap_quantile(sup, 0.05) == 95.0);
    CHECK(bootstrap_quantile(sup, 0.1) == 90.0);
    CHECK(bootstrap_quantile(sup, 0.015) == 99.0);
}

TEST_CASE("single column critical value is close to the normal quantile") {
    const auto M = random_eif(2000, 1, 3);
    const auto eif = matrix(M, {1.0});
    const auto est = summarize(eif, "x");
    const auto band = uniform_band(eif, est, 0.05, 10000, 11);
    CHECK(std::abs(band.c_alpha_bootstrap - band.z) < 0.05);
    CHECK(band.c_alpha >= band.z);
}

TEST_CASE("property: band invariants over random inputs") {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        const int J = 1 + static_cast<int>(seed % 5);
        const auto M = random_eif(100 + 37 * seed, J, 100 + seed, 0.3 + 0.08 * seed);
        const auto eif = matrix(M, grid_values(J));
        const auto est = summarize(eif, "x");
        const auto draws = bootstrap_sup(M, est.psi_hat, est.sigma_hat, 500, seed);
        const auto b05 = band_from_draws(est, draws, 0.05, 500);
        const auto b10 = band_from_draws(est, draws, 0.10, 500);
        const auto b01 = band_from_draws(est, draws, 0.01, 500);
        CHECK(b05.c_alpha >= b05.z);
        CHECK(b10.c_alpha >= b10.z);
        CHECK(b01.c_alpha >= b01.z);
        for (int j = 0; j < J; ++j) {
            // uniform contains pointwise; smaller alpha gives wider bands
            CHECK(b05.unif_lo[j] <= b05.pw_lo[j]);
            CHECK(b05.unif_hi[j] >= b05.pw_hi[j]);
            CHECK(b01.unif_lo[j] <= b05.unif_lo[j]);
            CHECK(b05.unif_lo[j] <= b10.unif_lo[j]);
            CHECK(b01.unif_hi[j] >= b05.unif_hi[j]);
            CHECK(b05.unif_hi[j] >= b10.unif_hi[j]);
        }
    }
}

TEST_CASE("bootstrap is reproducible across thread counts") {
    const auto M = random_eif(500, 6, 5);
    const auto eif = matrix(M, grid_values(6));
    const auto est = summarize(eif, "x");
    const auto a = bootstrap_sup(M, est.psi_hat, est.sigma_hat, 1000, 42, 1);
    const auto b = bootstrap_sup(M, est.psi_hat, est.sigma_hat, 1000, 42, 3);
    CHECK(a.sup == b.sup);
    const auto c = bootstrap_sup(M, est.psi_hat, est.sigma_hat, 1000, 43, 1);
    CHECK(a.sup != c.sup);
}

TEST_CASE("degenerate columns are excluded") {
    Eigen::MatrixXd M = random_eif(200, 3, 6);
    M.col(1).setConstant(2.0);
    const auto eif = matrix(M, grid_values(3));
    const auto est = summarize(eif, "x");
    const auto band = uniform_band(eif, est, 0.05, 200, 1);
    CHECK(band.unif_lo[1] == 2.0);
    CHECK(band.unif_hi[1] == 2.0);
    CHECK_FALSE(band.warnings.empty());

    const Eigen::MatrixXd flat = Eigen::MatrixXd::Constant(50, 2, 1.0);
    const auto fe = matrix(flat, {1.0, 2.0});
    const auto fb = uniform_band(fe, summarize(fe, "x"), 0.05, 200, 1);
    CHECK(fb.c_alpha == fb.z);
}

TEST_CASE("pooled band covers every horizon with one critical value") {
    const auto M1 = random_eif(300, 3, 7);
    const auto M2 = random_eif(300, 3, 8);
    const auto e1 = matrix(M1, grid_values(3));
    auto e2 = matrix(M2, grid_values(3));
    e2.t = 2;
    const auto bands = uniform_band_pooled({e1, e2}, {summarize(e1, "x"), summarize(e2, "x")}, 0.05, 1000, 3);
    REQUIRE(bands.size() == 2);
    CHECK(bands[0].c_alpha == bands[1].c_alpha);
    const auto single = uniform_band(e1, summarize(e1, "x"), 0.05, 1000, 3);
    CHECK(bands[0].c_alpha >= single.c_alpha - 0.05);
}
