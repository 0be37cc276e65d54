#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "mml/errors.hpp"
#include "mml/matching.hpp"
#include "mml/rng.hpp"
#include "mml/stats.hpp"

using namespace mml;

namespace {

std::vector<double> exp_quantiles(double rate, std::size_t n) {
    std::vector<double> q(n);
    for (std::size_t i = 0; i < n; ++i) q[i] = -std::log(1.0 - (i + 0.5) / n) / rate;
    return q;
}

std::vector<double> exp_draws(double rate, std::size_t n, Seed seed) {
    CounterRng rng(stream_key(seed, "draws"));
    std::vector<double> v(n);
    for (double& x : v) x = rng.exponential(rate);
    return v;
}

// sup |F_hat - F| over a dense grid plus both sides of every jump
double ks_dense(const std::vector<double>& samples, double rate) {
    const EmpiricalCDF F(samples);
    std::vector<double> pts;
    const double top = F.sorted_samples().back() * 1.5;
    for (int k = 0; k <= 1000000; ++k) pts.push_back(top * k / 1e6);
    for (double x : samples) {
        pts.push_back(x);
        pts.push_back(std::nextafter(x, -1.0));
    }
    double d = 0;
    for (double t : pts) d = std::max(d, std::abs(F(t) - exp_cdf(t, rate)));
    return d;
}

}  // namespace

TEST_CASE("EmpiricalCDF is a right-continuous step function") {
    const std::vector<double> s = {0.3, 0.1, 0.2, 0.2};
    const EmpiricalCDF F(s);
    CHECK(F(0.0) == 0.0);
    CHECK(F(0.1) == 0.25);
    CHECK(F(0.15) == 0.25);
    CHECK(F(0.2) == 0.75);
    CHECK(F(0.3) == 1.0);
    CHECK(F(5.0) == 1.0);
}

TEST_CASE("KS distance at jump points") {
    SUBCASE("exact quantiles give 1/(2n)") {
        for (std::size_t n : {1, 10, 1000})
            CHECK(ks_distance_to_exp(exp_quantiles(2.0, n), 2.0) == doctest::Approx(0.5 / n).epsilon(1e-9));
    }
    SUBCASE("single sample at the median") {
        const std::vector<double> s = {std::log(2.0) / 3.0};
        CHECK(ks_distance_to_exp(s, 3.0) == doctest::Approx(0.5));
    }
    SUBCASE("all samples at zero") {
        const std::vector<double> s(5, 0.0);
        CHECK(ks_distance_to_exp(s, 1.0) == 1.0);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(ks_distance_to_exp({}, 1.0), EmptySample);
        const std::vector<double> s = {1.0};
        CHECK_THROWS_AS(ks_distance_to_exp(s, 0.0), NonPositiveRate);
        CHECK_THROWS_AS(ks_distance_to_exp(s, -1.0), NonPositiveRate);
    }
}

TEST_CASE("KS distance agrees with a dense evaluation") {
    for (Seed s = 0; s < 3; ++s) {
        const auto v = exp_draws(1.0 + s, 50 + 100 * s, s);
        for (double rate : {0.7, 1.0 + s, 4.0}) CHECK(std::abs(ks_distance_to_exp(v, rate) - ks_dense(v, rate)) <= 1e-9);
    }
}

TEST_CASE("changing k samples moves the KS distance by at most k/n") {
    auto v = exp_draws(1.0, 200, 4);
    const double before = ks_distance_to_exp(v, 1.0);
    for (std::size_t k = 1; k <= 10; ++k) {
        auto w = v;
        for (std::size_t i = 0; i < k; ++i) w[i] = 50.0 + i;
        CHECK(std::abs(ks_distance_to_exp(w, 1.0) - before) <= static_cast<double>(k) / 200 + 1e-15);
    }
}

TEST_CASE("distance between exponential CDFs") {
    CHECK(exp_cdf_distance(2.0, 2.0) == 0.0);
    // brute-force maximum on a grid
    double grid = 0;
    for (int k = 1; k < 200000; ++k) {
        const double x = k * 1e-4;
        grid = std::max(grid, std::abs(std::exp(-x) - std::exp(-1.5 * x)));
    }
    CHECK(exp_cdf_distance(1.0, 1.5) == doctest::Approx(grid).epsilon(1e-6));
    CHECK(exp_cdf_distance(1.5, 1.0) == doctest::Approx(exp_cdf_distance(1.0, 1.5)).epsilon(1e-14));
}

TEST_CASE("best-fit exponential") {
    SUBCASE("quantiles of Exp(3)") {
        const auto fit = best_fit_exponential(exp_quantiles(3.0, 1000));
        CHECK(fit.lambda >= 2.9);
        CHECK(fit.lambda <= 3.1);
        CHECK(fit.ks_distance <= 0.5 / 1000 + 1e-4);
        CHECK(fit.method == FitMethod::GridRefine);
    }
    SUBCASE("reported distance is recomputable") {
        const auto v = exp_draws(2.0, 300, 5);
        const auto fit = best_fit_exponential(v);
        CHECK(std::abs(fit.ks_distance - ks_distance_to_exp(v, fit.lambda)) <= 1e-12);
    }
    SUBCASE("scale equivariance") {
        const auto v = exp_draws(1.0, 400, 6);
        auto w = v;
        for (double& x : w) x *= 7.0;
        const auto a = best_fit_exponential(v), b = best_fit_exponential(w);
        CHECK(b.lambda == doctest::Approx(a.lambda / 7.0).epsilon(1e-3));
        CHECK(b.ks_distance == doctest::Approx(a.ks_distance).epsilon(1e-3));
    }
    SUBCASE("dominates the closed-form choices") {
        for (Seed s = 0; s < 20; ++s) {
            const auto v = exp_draws(0.5 + s, 100 + 10 * s, 100 + s);
            const auto fit = best_fit_exponential(v);
            const auto inv = inverse_mean_fit(v);
            const auto other = fit_at(v, 1.3 * inv.lambda, FitMethod::ClosedFormYSum);
            CHECK(inv.method == FitMethod::InverseMean);
            CHECK(fit.ks_distance <= std::min(inv.ks_distance, other.ks_distance) + 1e-3);
        }
    }
    SUBCASE("degenerate input") {
        CHECK_THROWS_AS(best_fit_exponential({}), DegenerateSample);
        const std::vector<double> zeros(4, 0.0);
        CHECK_THROWS_AS(best_fit_exponential(zeros), DegenerateSample);
        CHECK_THROWS_AS(inverse_mean_fit(zeros), DegenerateSample);
    }
}

TEST_CASE("rescaled ranks") {
    const std::vector<int> r = {1, 5, 3};
    const std::vector<double> ones(3, 1.0), n(3, 10.0), two(2, 1.0);
    CHECK(rescaled_ranks(r, ones) == std::vector<double>{1, 5, 3});
    for (double x : rescaled_ranks(r, n)) {
        CHECK(x > 0.0);
        CHECK(x <= 1.0);
    }
    CHECK_THROWS_AS(rescaled_ranks(r, two), ShapeMismatch);
}

TEST_CASE("hyperbola product") {
    const std::size_t n = 16;
    const std::vector<double> x(n, 0.25), zero(n, 0.0);
    CHECK(hyperbola_product(x, x, n) == doctest::Approx(1.0));
    CHECK(hyperbola_product(zero, x, n) == 0.0);
}

TEST_CASE("eig dispersion") {
    const std::size_t n = 7;
    Matrix J(n, n, 1.0 / n);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = 0.1 * (i + 1);
    const auto d = eig_dispersion(J, y, 0.01);
    CHECK(d.violating_fraction == 0.0);
    CHECK(d.t_star == doctest::Approx(0.4));

    // any bistochastic M maps a constant vector to itself
    Matrix P(3, 3, 0.0);
    P(0, 1) = P(1, 2) = P(2, 0) = 0.7;
    P(0, 0) = P(1, 1) = P(2, 2) = 0.3;
    const std::vector<double> c(3, 2.0);
    CHECK(eig_dispersion(P, c, 1e-6).violating_fraction == 0.0);

    // identity M: e = y; median 2, band sqrt(0.25) * 2 = 1
    Matrix I(3, 3, 0.0);
    I(0, 0) = I(1, 1) = I(2, 2) = 1.0;
    const std::vector<double> yy = {1.0, 2.0, 3.5};
    const auto di = eig_dispersion(I, yy, 0.25);
    CHECK(di.t_star == 2.0);
    CHECK(di.violating_fraction == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("region check") {
    const std::size_t n = 50;
    Matrix J(n, n, 1.0 / n);
    const std::vector<double> zero(n, 0.0);
    CHECK(!region_check(zero, zero, J, 0.1, 10, 10).in_R1_u);
    CHECK(region_check(zero, zero, J, 0.1, 10, 10).in_R2);

    std::vector<double> u(n, 0.0);
    u[0] = 0.1 * std::log(static_cast<double>(n));
    const auto f = region_check(u, u, J, 0.1, 10, 10);
    CHECK(f.in_R1_u);  // lower boundary is inclusive
    CHECK(f.in_R1_v);

    std::vector<double> big(n, 1.0);  // ||u||_1 = n above c1_hi n (ln n)^(-7/8) for c1_hi = 1
    CHECK(!region_check(big, big, J, 0.1, 1, 10).in_R1_u);
    CHECK(!region_check(big, big, J, 0.1, 10, 10).in_R2);  // u^T J v = n
}

TEST_CASE("DKW bound") {
    CHECK(dkw_bound(100, 0.0, 0.3) == doctest::Approx(4 * std::exp(-2.0)).epsilon(1e-12));
    CHECK(dkw_bound(100, 0.0, 0.3) == doctest::Approx(0.5413).epsilon(1e-4));
    CHECK(dkw_bound(100, 0.1, 100.0) < 1e-300);
    CHECK(dkw_bound(100, 0.0, 0.2) > dkw_bound(100, 0.0, 0.3));
    CHECK(dkw_bound(100, 0.0, 0.2) > dkw_bound(200, 0.0, 0.2));
}

TEST_CASE("rank/value ratio report") {
    MatchingOutcome out;
    out.value_men = {0.5, 0.25, 0.1};
    out.rank_men = {5, 3, 1};
    const std::vector<double> phi = {10.0, 12.0, 10.0};
    CHECK(rank_value_ratio_report(out, phi, 1e-9) == 0.0);
    out.rank_men[1] = 6;  // ratio 2
    CHECK(rank_value_ratio_report(out, phi, 0.5) == doctest::Approx(1.0 / 3));
    CHECK(rank_value_ratio_report(out, phi, 1e9) == 0.0);
}
