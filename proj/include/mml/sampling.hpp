#pragma once

#include <cstddef>
#include <vector>

#include "mml/market.hpp"
#include "mml/matrix.hpp"
#include "mml/rng.hpp"

namespace mml {

// Latent values: X(i, j) is man i's value for woman j, Y(j, i) is woman j's
// value for man i. Lower is better.
struct LatentValues {
    Matrix X;  // n_men x n_women
    Matrix Y;  // n_women x n_men
    Seed seed = 0;

    std::size_t n_men() const noexcept { return X.rows(); }
    std::size_t n_women() const noexcept { return X.cols(); }

    // Keeps the first `count` men (rows of X, columns of Y).
    LatentValues first_men(std::size_t count) const;
};

// Preference lists, best first, 0-based indices.
struct PreferenceProfile {
    std::vector<std::vector<int>> men;
    std::vector<std::vector<int>> women;

    std::size_t n_men() const noexcept { return men.size(); }
    std::size_t n_women() const noexcept { return women.size(); }
};

// X(i, j) ~ Exp(A(i, j)), Y(j, i) ~ Exp(B(j, i)) by inverse CDF, each cell from
// its own stream keyed by (seed, "X" | "Y", i, j). Throws DuplicateValue if a
// row contains an exact tie.
LatentValues sample_latent(const BalancedMarket& bal, Seed seed);

// Same, with explicit rate matrices (rows: men for x_rates, women for y_rates).
LatentValues sample_latent(const Matrix& x_rates, const Matrix& y_rates, Seed seed);

// Ascending argsort of every value row. Throws DuplicateValue on ties.
PreferenceProfile prefs_from_latent(const LatentValues& values);

// Sequential draws without replacement, each proportional to the remaining
// canonical scores. O(n^2) per agent.
PreferenceProfile logit_sample_prefs(const BalancedMarket& bal, Seed seed);

// Argsort of one row; throws DuplicateValue on ties.
std::vector<int> ascending_order(std::span<const double> row);

}  // namespace mml
