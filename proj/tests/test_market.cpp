#include <doctest.h>

#include <cmath>
#include <sstream>

#include "mml/errors.hpp"
#include "mml/market.hpp"
#include "mml/market_io.hpp"
#include "mml/matching.hpp"
#include "mml/oracles.hpp"
#include "mml/sampling.hpp"

using namespace mml;

namespace {

double max_row_dev(const Matrix& m) {
    double d = 0;
    for (std::size_t i = 0; i < m.rows(); ++i) {
        double s = 0;
        for (double v : m.row(i)) s += v;
        d = std::max(d, std::abs(s - 1.0));
    }
    return d;
}

double max_col_dev(const Matrix& m) { return max_row_dev(m.transposed()); }

}  // namespace

TEST_CASE("canonical_from_raw normalizes rows") {
    SUBCASE("all ones") {
        const auto m = canonical_from_raw(Matrix(3, 3, 1.0), Matrix(3, 3, 1.0));
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j) CHECK(m.a_hat()(i, j) == doctest::Approx(1.0 / 3));
    }
    SUBCASE("row (2, 1, 1)") {
        Matrix a(3, 3, 1.0);
        a(0, 0) = 2.0;
        const auto m = canonical_from_raw(a, Matrix(3, 3, 1.0));
        CHECK(m.a_hat()(0, 0) == 0.5);
        CHECK(m.a_hat()(0, 1) == 0.25);
        CHECK(m.a_hat()(0, 2) == 0.25);
    }
    SUBCASE("random 4x4 rows sum to one") {
        Matrix a(4, 4), b(4, 4);
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = 0; j < 4; ++j) {
                a(i, j) = 0.1 + 5 * uniform_at(stream_key(1, "a", i, j));
                b(i, j) = 0.1 + 5 * uniform_at(stream_key(1, "b", i, j));
            }
        const auto m = canonical_from_raw(a, b);
        CHECK(max_row_dev(m.a_hat()) <= 1e-12);
        CHECK(max_row_dev(m.b_hat()) <= 1e-12);
    }
}

TEST_CASE("canonical_from_raw rejects bad input") {
    Matrix a(2, 2, 1.0);
    a(1, 0) = 0.0;
    CHECK_THROWS_AS(canonical_from_raw(a, Matrix(2, 2, 1.0)), NonPositiveEntry);
    a(1, 0) = -1.0;
    CHECK_THROWS_AS(canonical_from_raw(a, Matrix(2, 2, 1.0)), NonPositiveEntry);
    CHECK_THROWS_AS(canonical_from_raw(Matrix(2, 3, 1.0), Matrix(2, 3, 1.0)), ShapeMismatch);
    CHECK_NOTHROW(canonical_from_raw(Matrix(2, 3, 1.0), Matrix(3, 2, 1.0)));
    CHECK_THROWS_AS(CanonicalMarket(Matrix(2, 2, 0.6), Matrix(2, 2, 0.5)), NotNormalized);
}

TEST_CASE("scaling a raw row does not change the canonical market") {
    Matrix a(3, 3), b(3, 3);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
            a(i, j) = 1 + uniform_at(stream_key(2, "a", i, j));
            b(i, j) = 1 + uniform_at(stream_key(2, "b", i, j));
        }
    const auto m1 = canonical_from_raw(a, b);
    for (std::size_t j = 0; j < 3; ++j) a(1, j) *= 37.5;
    const auto m2 = canonical_from_raw(a, b);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            CHECK(std::abs(m1.a_hat()(i, j) - m2.a_hat()(i, j)) <= 1e-12);
}

TEST_CASE("uniform market balances to M = J and phi = psi = n") {
    for (std::size_t n : {1, 2, 5, 40}) {
        const auto bal = sinkhorn_balance(uniform_market(n));
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(bal.phi[i] == doctest::Approx(static_cast<double>(n)).epsilon(1e-12));
            CHECK(bal.psi[i] == doctest::Approx(static_cast<double>(n)).epsilon(1e-12));
            for (std::size_t j = 0; j < n; ++j)
                CHECK(bal.M(i, j) == doctest::Approx(1.0 / n).epsilon(1e-12));
        }
        CHECK(contiguity_constant(bal) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("public scores: M = J, phi = 1/b_hat, psi = 1/a_hat") {
    const std::vector<double> a = {1.0, 2.0, 3.5, 0.5, 1.25};
    const std::vector<double> b = {4.0, 1.0, 1.0, 2.0, 0.3};
    const auto market = public_scores_market(a, b);
    const auto bal = sinkhorn_balance(market);
    const double sa = 8.25, sb = 8.3;
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(bal.phi[i] == doctest::Approx(sb / b[i]).epsilon(1e-8));
        CHECK(bal.psi[i] == doctest::Approx(sa / a[i]).epsilon(1e-8));
        for (std::size_t j = 0; j < 5; ++j) CHECK(bal.M(i, j) == doctest::Approx(0.2).epsilon(1e-8));
    }
}

TEST_CASE("balanced form invariants on random C-bounded markets") {
    for (std::size_t n : {2, 5, 17, 60}) {
        for (double c : {1.5, 2.0, 4.0}) {
            const auto market = random_cbounded_market(n, c, stream_key(n, "inv", static_cast<std::uint64_t>(c * 10)));
            const auto bal = sinkhorn_balance(market);
            CHECK(bal.residual <= 1e-10);
            CHECK(max_row_dev(bal.M) <= bal.residual + 1e-15);
            CHECK(max_col_dev(bal.M) <= bal.residual + 1e-15);
            double worst_phi = 0, worst_m = 0, worst_c = 1;
            for (std::size_t i = 0; i < n; ++i) {
                double s = 0;
                for (std::size_t j = 0; j < n; ++j) {
                    s += bal.A(i, j);
                    worst_m = std::max(worst_m, std::abs(bal.M(i, j) - bal.A(i, j) * bal.B(j, i) / n));
                    // independent scan for the contiguity constant
                    for (double v : {bal.A(i, j), bal.B(j, i), n * bal.M(i, j)})
                        worst_c = std::max({worst_c, v, 1.0 / v});
                }
                worst_phi = std::max(worst_phi, std::abs(bal.phi[i] - s) / bal.phi[i]);
            }
            CHECK(worst_phi <= 1e-10);
            CHECK(worst_m <= 1e-12);
            CHECK(bal.c_bound == worst_c);
        }
    }
}

TEST_CASE("contiguity constant of a market with A entries in {0.5, 2}") {
    // A = [[2, .5], [.5, 2]], B = A^T: M = A o A / 2 is not bistochastic, so
    // exercise the scan directly.
    Matrix A(2, 2, 0.5), B(2, 2, 0.5), M(2, 2, 0.5);
    A(0, 0) = A(1, 1) = B(0, 0) = B(1, 1) = 2.0;
    CHECK(contiguity_constant(A, B, M) == 2.0);
}

TEST_CASE("random_cbounded_market") {
    SUBCASE("c = 1 is the uniform market") {
        const auto m = random_cbounded_market(6, 1.0, 42);
        for (std::size_t i = 0; i < 6; ++i)
            for (std::size_t j = 0; j < 6; ++j) CHECK(m.a_hat()(i, j) == doctest::Approx(1.0 / 6));
    }
    SUBCASE("deterministic") {
        const auto m1 = random_cbounded_market(9, 3.0, 42);
        const auto m2 = random_cbounded_market(9, 3.0, 42);
        CHECK(m1.a_hat() == m2.a_hat());
        CHECK(m1.b_hat() == m2.b_hat());
        CHECK(!(random_cbounded_market(9, 3.0, 43).a_hat() == m1.a_hat()));
    }
    SUBCASE("within-row ratios bounded by c^2") {
        const auto m = random_cbounded_market(100, 2.0, 5);
        double worst = 1.0;
        for (std::size_t i = 0; i < 100; ++i) {
            const auto row = m.a_hat().row(i);
            worst = std::max(worst, *std::max_element(row.begin(), row.end()) /
                                        *std::min_element(row.begin(), row.end()));
        }
        CHECK(worst <= 4.0);
        CHECK(worst > 3.0);  // the interval is actually used
    }
    SUBCASE("balanced contiguity stays moderate") {
        const auto bal = sinkhorn_balance(random_cbounded_market(8, 3.0, 77));
        CHECK(bal.c_bound <= 3.0 * 3.0 * 3.0);
    }
}

TEST_CASE("sinkhorn errors") {
    CHECK_THROWS_AS(sinkhorn_balance(uniform_market(2, 3)), NonSquare);
    const auto market = random_cbounded_market(30, 4.0, 1);
    CHECK_THROWS_AS(sinkhorn_balance(market, {1e-15, 3}), NoConvergence);
    try {
        sinkhorn_balance(market, {1e-15, 3});
    } catch (const NoConvergence& e) {
        CHECK(e.iterations() == 3);
        CHECK(e.last_residual() > 0.0);
    }
}

TEST_CASE("balancing a balanced market changes nothing") {
    const auto bal = sinkhorn_balance(random_cbounded_market(12, 2.5, 8));
    // the canonical form of the balanced market is the market itself; feed M
    // back in through raw scores (rows of A and B)
    const auto again = sinkhorn_balance(canonical_from_raw(bal.A, bal.B));
    for (std::size_t i = 0; i < 12; ++i)
        for (std::size_t j = 0; j < 12; ++j) CHECK(std::abs(again.M(i, j) - bal.M(i, j)) <= 1e-10);
}

TEST_CASE("backfill_imbalanced") {
    const auto rect = random_cbounded_market(4, 6, 2.0, 3);
    SUBCASE("k = 0 is the identity") {
        const auto sq = random_cbounded_market(5, 2.0, 3);
        const auto same = backfill_imbalanced(sq, 0);
        CHECK(same.a_hat() == sq.a_hat());
        CHECK(same.b_hat() == sq.b_hat());
    }
    SUBCASE("one man, two women") {
        Matrix a(1, 2), b(2, 1, 1.0);
        a(0, 0) = 0.25;
        a(0, 1) = 0.75;
        const auto out = backfill_imbalanced(CanonicalMarket(a, b), 1);
        REQUIRE(out.n_men() == 2);
        REQUIRE(out.n_women() == 2);
        CHECK(out.a_hat()(0, 0) == doctest::Approx(0.25));
        CHECK(out.a_hat()(1, 0) == doctest::Approx(0.5));
        CHECK(out.a_hat()(1, 1) == doctest::Approx(0.5));
        // each woman scores the real man and the new man equally
        CHECK(out.b_hat()(0, 0) == doctest::Approx(0.5));
        CHECK(out.b_hat()(1, 1) == doctest::Approx(0.5));
    }
    SUBCASE("real rows keep their relative scores") {
        const auto out = backfill_imbalanced(rect, 2);
        CHECK(out.square());
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = 0; j < 6; ++j)
                CHECK(out.a_hat()(i, j) == doctest::Approx(rect.a_hat()(i, j)).epsilon(1e-12));
        for (std::size_t j = 0; j < 6; ++j)
            for (std::size_t i = 0; i + 1 < 4; ++i)
                CHECK(out.b_hat()(j, i) / out.b_hat()(j, i + 1) ==
                      doctest::Approx(rect.b_hat()(j, i) / rect.b_hat()(j, i + 1)));
    }
    SUBCASE("shape is checked") { CHECK_THROWS_AS(backfill_imbalanced(rect, 3), ShapeMismatch); }
}

TEST_CASE("stable matchings of an imbalanced market are (k/n)-stable in the backfill") {
    // n = 6, k = 2: extend each stable matching of the 4 x 6 market by pairing
    // the new men with the unmatched women; it must be 2/6-stable.
    for (Seed s = 0; s < 10; ++s) {
        const auto rect = random_cbounded_market(4, 6, 2.0, stream_key(s, "bf"));
        const auto bal = sinkhorn_balance(backfill_imbalanced(rect, 2));
        const auto full = sample_latent(bal, stream_key(s, "v"));
        const auto values = full.first_men(4);
        for (Side side : {Side::Men, Side::Women}) {
            const auto mu = deferred_acceptance(prefs_from_latent(values), side).matching;
            std::vector<int> wife(mu.wives());
            std::vector<bool> taken(6, false);
            for (int w : wife) taken[w] = true;
            for (int w = 0; w < 6; ++w)
                if (!taken[w]) wife.push_back(w);
            const auto extended = Matching::full(wife);
            CHECK(is_alpha_stable_exact(extended, full, 2.0 / 6.0));
        }
    }
}

TEST_CASE("market files round-trip bit-exactly") {
    const auto m = random_cbounded_market(3, 5, 3.0, 99);
    std::stringstream ss;
    write_market(ss, m);
    const auto back = read_market(ss);
    CHECK(back.a_hat() == m.a_hat());
    CHECK(back.b_hat() == m.b_hat());
}

TEST_CASE("market files with raw scores are normalized") {
    std::istringstream in("2 2\n1 3\n2 2\n\n5 5\n1 4\n");
    const auto m = read_market(in);
    CHECK(m.a_hat()(0, 1) == 0.75);
    CHECK(m.a_hat()(1, 0) == 0.5);
    CHECK(m.b_hat()(1, 1) == 0.8);
    std::istringstream bad("2 2\n1 0\n1 1\n\n1 1\n1 1\n");
    CHECK_THROWS_AS(read_market(bad), NonPositiveEntry);
    std::istringstream truncated("2 2\n1 1\n");
    CHECK_THROWS_AS(read_market(truncated), Error);
}
