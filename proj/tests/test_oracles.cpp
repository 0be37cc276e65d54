#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mml/errors.hpp"
#include "mml/market.hpp"
#include "mml/matching.hpp"
#include "mml/oracles.hpp"
#include "mml/sampling.hpp"
#include "mml/stats.hpp"

using namespace mml;

namespace {

Matching identity(std::size_t n) {
    std::vector<int> w(n);
    std::iota(w.begin(), w.end(), 0);
    return Matching::full(w);
}

std::vector<double> positive_vector(std::size_t n, double scale, Seed seed, const char* label) {
    CounterRng rng(stream_key(seed, label));
    std::vector<double> v(n);
    for (double& x : v) x = scale * rng.uniform();
    return v;
}

// appends the women (or men) of the other 2x2 block after the own block
std::vector<int> with_other_block(std::vector<int> own, int offset, int other) {
    for (int& k : own) k += offset;
    own.push_back(other);
    own.push_back(other + 1);
    return own;
}

}  // namespace

TEST_CASE("p_mu closed form") {
    const auto bal = sinkhorn_balance(uniform_market(2));
    const auto mu = identity(2);
    SUBCASE("zero men's values") {
        const std::vector<double> x(2, 0.0), y(2, 3.0);
        CHECK(p_mu(x, y, bal.A, bal.B, mu) == 1.0);
    }
    SUBCASE("each exponential factor one half") {
        const double a = bal.A(0, 1);
        const std::vector<double> x(2, std::log(2.0) / a), y(2, std::log(2.0) / bal.B(1, 0));
        CHECK(p_mu(x, y, bal.A, bal.B, mu) == doctest::Approx(0.5625).epsilon(1e-12));
    }
    SUBCASE("shape errors") {
        const std::vector<double> x(3, 0.0), y(2, 0.0);
        CHECK_THROWS_AS(p_mu(x, y, bal.A, bal.B, mu), ShapeMismatch);
    }
}

TEST_CASE("q_xy closed form") {
    const std::size_t n = 6;
    const Matrix J(n, n, 1.0 / n);
    const std::vector<double> zero(n, 0.0), ones(n, 1.0);
    CHECK(q_xy(zero, ones, J) == 1.0);
    // x^T J y = n, so q = exp(-n^2)
    CHECK(q_xy(ones, ones, J) == doctest::Approx(std::exp(-36.0)).epsilon(1e-12));
}

TEST_CASE("q_xy is dominated by the off-match exponential form") {
    // n M_ij = a_ij b_ji in balanced form, so dropping the matched terms only raises the bound
    for (Seed s = 0; s < 20; ++s) {
        const std::size_t n = 5 + s % 4;
        const auto bal = sinkhorn_balance(random_cbounded_market(n, 3.0, s));
        const auto x = positive_vector(n, 0.5, s, "x"), y = positive_vector(n, 0.5, s, "y");
        const auto mu = identity(n);
        double off = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (j != i) off += bal.A(i, j) * bal.B(j, i) * x[i] * y[j];
        CHECK(log_q_xy(x, y, bal.M) <= -off + 1e-12);
    }
}

TEST_CASE("naive upper bound") {
    SUBCASE("tight for the uniform market at C = 1") {
        const auto bal = sinkhorn_balance(uniform_market(5));
        const auto x = positive_vector(5, 2.0, 1, "x"), y = positive_vector(5, 2.0, 1, "y");
        const auto mu = identity(5);
        CHECK(naive_p_upper(x, y, mu, bal.A, bal.B, 1.0) ==
              doctest::Approx(p_mu(x, y, bal.A, bal.B, mu)).epsilon(1e-10));
    }
    SUBCASE("zero values") {
        const auto bal = sinkhorn_balance(random_cbounded_market(4, 2.0, 3));
        const std::vector<double> zero(4, 0.0), y(4, 1.0);
        CHECK(naive_p_upper(zero, y, identity(4), bal.A, bal.B, 2.0) == 1.0);
    }
    SUBCASE("dominates p_mu for any valid C") {
        int checked = 0;
        for (Seed s = 0; s < 1000; ++s) {
            const std::size_t n = 2 + s % 7;
            const auto bal = sinkhorn_balance(random_cbounded_market(n, 1.0 + 0.003 * s, 1000 + s));
            const auto x = positive_vector(n, 3.0, s, "x"), y = positive_vector(n, 3.0, s, "y");
            CounterRng rng(stream_key(s, "perm"));
            std::vector<int> w(n);
            std::iota(w.begin(), w.end(), 0);
            std::shuffle(w.begin(), w.end(), rng);
            const auto mu = Matching::full(w);
            const double p = p_mu(x, y, bal.A, bal.B, mu);
            const double upper = naive_p_upper(x, y, mu, bal.A, bal.B, bal.c_bound);
            CHECK(upper >= p * (1.0 - 1e-12));
            ++checked;
        }
        CHECK(checked == 1000);
    }
}

TEST_CASE("p_mu matches the conditional stability frequency") {
    for (Seed s = 0; s < 5; ++s) {
        const std::size_t n = 4;
        const auto bal = sinkhorn_balance(random_cbounded_market(n, 2.0, 40 + s));
        const auto x = positive_vector(n, 0.4, s, "x"), y = positive_vector(n, 0.4, s, "y");
        const auto mu = identity(n);
        const double p = p_mu(x, y, bal.A, bal.B, mu);
        const std::size_t trials = 100000;
        const double freq = stability_frequency_mc(x, y, bal.A, bal.B, mu, trials, 70 + s);
        CHECK(std::abs(freq - p) <= 3.0 * std::sqrt(p * (1 - p) / trials));
    }
}

TEST_CASE("log-space evaluation stays finite") {
    const std::size_t n = 2;
    const auto bal = sinkhorn_balance(uniform_market(n));
    // x^T J y = 70 * 70 * 2 = 9800
    const std::vector<double> big(n, 70.0);
    const auto mu = identity(n);
    const double lp = log_p_mu(big, big, bal.A, bal.B, mu);
    CHECK(std::isfinite(lp));
    // 1 - (1 - e^-70)^2 = 2 e^-70 - e^-140
    CHECK(lp == doctest::Approx(2.0 * (std::log(2.0) - 70.0)).epsilon(1e-12));
    const double lq = log_q_xy(big, big, bal.M);
    CHECK(std::isfinite(lq));
    CHECK(lq == doctest::Approx(-2.0 * 9800.0).epsilon(1e-12));
    CHECK(std::isfinite(std::log(naive_p_upper(big, big, mu, bal.A, bal.B, 1.0))));

    // small values: the factors are 1 - O(1e-20) and must not round to an exact zero log
    const std::vector<double> tiny(n, 1e-10);
    CHECK(log_p_mu(tiny, tiny, bal.A, bal.B, mu) == doctest::Approx(-2e-20).epsilon(1e-6));
}

TEST_CASE("Chernoff lower-tail bound") {
    const std::vector<double> ones(50, 1.0);
    CHECK(chernoff_lower_tail(ones, 1.0) == 1.0);
    CHECK(chernoff_lower_tail(ones, 2.0) == 1.0);  // clamped
    const std::vector<double> uneven = {0.5, 1.5};
    CHECK(chernoff_lower_tail(uneven, 1.5) == 1.0);
    CHECK(log_chernoff_lower_tail(ones, 0.1) == doctest::Approx(50.0 * (std::log(0.1) + 0.9)).epsilon(1e-12));
    CHECK(chernoff_lower_tail(ones, 0.1) == doctest::Approx(3.53e-31).epsilon(1e-3));
    const std::vector<double> off(50, 1.1);
    CHECK_THROWS_AS(chernoff_lower_tail(off, 0.5), NotNormalized);

    SUBCASE("empirical tail stays below the bound") {
        CounterRng rng(stream_key(5, "u"));
        std::vector<double> u(50);
        for (double& x : u) x = std::exp(std::log(0.5) + rng.uniform() * std::log(4.0));
        const double total = std::accumulate(u.begin(), u.end(), 0.0);
        for (double& x : u) x *= 50.0 / total;
        const std::vector<double> ts = {0.3, 0.5, 0.7};
        const auto freq = chernoff_frequency_mc(u, ts, 100000, 6);
        for (std::size_t k = 0; k < ts.size(); ++k) CHECK(freq[k] <= chernoff_lower_tail(u, ts[k]));
        CHECK(freq[0] <= freq[1]);
        CHECK(freq[1] <= freq[2]);
    }
}

TEST_CASE("DKW violation frequency stays below the bound") {
    std::vector<double> rates(200, 1.0);
    for (std::size_t i = 0; i < rates.size(); ++i) {
        rates[i] = 0.98 + 0.04 * i / 199.0;
        REQUIRE(exp_cdf_distance(rates[i], 1.0) <= 0.02);
    }
    const double freq = dkw_violation_frequency_mc(rates, 0.02, 0.1, 2000, 9);
    CHECK(freq <= dkw_bound(200, 0.02, 0.1));
}

TEST_CASE("expected stable count") {
    SUBCASE("n = 1") {
        const auto est = expected_stable_count_mc(uniform_market(1), 50, 1);
        CHECK(est.mean == 1.0);
        CHECK(est.std_error == 0.0);
    }
    SUBCASE("2x2 uniform") {
        const auto est = expected_stable_count_mc(uniform_market(2), 100000, 2);
        CHECK(std::abs(est.mean - 1.125) <= 3.0 * est.std_error);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(expected_stable_count_mc(uniform_market(11), 1, 0), TooLarge);
        CHECK_THROWS_AS(expected_stable_count_mc(uniform_market(2, 3), 1, 0), NonSquare);
    }
    SUBCASE("two independent 2x2 blocks at n = 4") {
        // each agent ranks the other block last; no stable matching crosses blocks
        const auto bal = sinkhorn_balance(uniform_market(2));
        const std::size_t trials = 100000;
        double sum = 0, sum_sq = 0;
        for (std::size_t t = 0; t < trials; ++t) {
            const auto p = prefs_from_latent(sample_latent(bal, trial_seed(31, t)));
            const auto q = prefs_from_latent(sample_latent(bal, trial_seed(32, t)));
            PreferenceProfile joint;
            for (int i = 0; i < 2; ++i) joint.men.push_back(with_other_block(p.men[i], 0, 2));
            for (int i = 0; i < 2; ++i) joint.men.push_back(with_other_block(q.men[i], 2, 0));
            for (int j = 0; j < 2; ++j) joint.women.push_back(with_other_block(p.women[j], 0, 2));
            for (int j = 0; j < 2; ++j) joint.women.push_back(with_other_block(q.women[j], 2, 0));
            const auto joint_count = static_cast<double>(enumerate_stable(joint).size());
            CHECK(joint_count == static_cast<double>(enumerate_stable(p).size() * enumerate_stable(q).size()));
            sum += joint_count;
            sum_sq += joint_count * joint_count;
        }
        const double mean = sum / trials;
        const double se = std::sqrt((sum_sq / trials - mean * mean) / (trials - 1));
        CHECK(std::abs(mean - 81.0 / 64.0) <= 3.0 * se);
    }
}
