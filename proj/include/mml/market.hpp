#pragma once

#include <cstddef>
#include <vector>

#include "mml/matrix.hpp"
#include "mml/rng.hpp"

namespace mml {

// Logit preference model in canonical form. Row i of a_hat is man i's choice
// distribution over women; row j of b_hat is woman j's distribution over men.
// Rectangular markets (n_men != n_women) are allowed here; only square
// markets can be balanced.
class CanonicalMarket {
public:
    // Validates row-stochasticity (1e-12) and strict positivity.
    CanonicalMarket(Matrix a_hat, Matrix b_hat);

    std::size_t n_men() const noexcept { return a_hat_.rows(); }
    std::size_t n_women() const noexcept { return a_hat_.cols(); }
    bool square() const noexcept { return n_men() == n_women(); }

    const Matrix& a_hat() const noexcept { return a_hat_; }
    const Matrix& b_hat() const noexcept { return b_hat_; }

private:
    Matrix a_hat_;
    Matrix b_hat_;
};

// Balanced form: A = diag(phi) a_hat, B = diag(psi) b_hat with the mutual
// matrix M = A o B^T / n bistochastic.
struct BalancedMarket {
    Matrix A;
    Matrix B;
    Matrix M;
    std::vector<double> phi;
    std::vector<double> psi;
    double c_bound = 1.0;
    std::size_t sinkhorn_iters = 0;
    double residual = 0.0;

    std::size_t n() const noexcept { return A.rows(); }
};

struct SinkhornOptions {
    double tol = 1e-10;
    std::size_t max_iters = 10'000;
};

constexpr double kRowSumTolerance = 1e-12;

// Divides each row by its sum. Throws NonPositiveEntry, ShapeMismatch.
CanonicalMarket canonical_from_raw(const Matrix& a_raw, const Matrix& b_raw);

// Alternating row/column scaling of a_hat o b_hat^T. The free constant in
// (phi, psi) is pinned by sum_i 1/phi_i == sum_j 1/psi_j, which gives
// phi = 1/b_hat, psi = 1/a_hat exactly for public-score markets.
// Throws NonSquare, NoConvergence.
BalancedMarket sinkhorn_balance(const CanonicalMarket& market, SinkhornOptions opts = {});

// Smallest C with every A_ij, B_ji, n M_ij inside [1/C, C].
double contiguity_constant(const Matrix& A, const Matrix& B, const Matrix& M);
double contiguity_constant(const BalancedMarket& bal);

// Raw scores log-uniform on [1/c_target, c_target], then row-normalized.
CanonicalMarket random_cbounded_market(std::size_t n, double c_target, Seed seed);

// Rectangular variant used for imbalanced experiments.
CanonicalMarket random_cbounded_market(std::size_t n_men, std::size_t n_women,
                                       double c_target, Seed seed);

CanonicalMarket uniform_market(std::size_t n_men, std::size_t n_women);
inline CanonicalMarket uniform_market(std::size_t n) { return uniform_market(n, n); }

// Every man shares the score vector a_scores, every woman shares b_scores.
// Scores need not be normalized.
CanonicalMarket public_scores_market(const std::vector<double>& a_scores,
                                     const std::vector<double>& b_scores);

// Appends k men with unit raw score for every woman, who also receive unit
// raw score from every woman, then re-normalizes. Requires k == n_women -
// n_men (k == 0 returns the market unchanged).
CanonicalMarket backfill_imbalanced(const CanonicalMarket& market, std::size_t k);

}  // namespace mml
