#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mml/market.hpp"
#include "mml/matching.hpp"
#include "mml/matrix.hpp"
#include "mml/rng.hpp"

namespace mml {

// Probability that mu is stable given its value vectors: product over
// non-matched pairs (i, j) of 1 - (1 - e^{-a_ij x_i})(1 - e^{-b_ji y_j}).
// x is indexed by man, y by woman. Accumulated as a sum of log1p terms.
double log_p_mu(std::span<const double> x, std::span<const double> y, const Matrix& A,
                const Matrix& B, const Matching& mu);
double p_mu(std::span<const double> x, std::span<const double> y, const Matrix& A,
            const Matrix& B, const Matching& mu);

// q(x, y) = exp(-n x^T M y).
double log_q_xy(std::span<const double> x, std::span<const double> y, const Matrix& M);
double q_xy(std::span<const double> x, std::span<const double> y, const Matrix& M);

// Upper bound on p_mu from C-boundedness, using the renormalized values
// x_i a_{i,mu(i)} and y_j b_{j,mu^-1(j)} with every rate replaced by 1/C^2.
double naive_p_upper(std::span<const double> x, std::span<const double> y, const Matching& mu,
                     const Matrix& A, const Matrix& B, double C);

// min(1, (t e^{1-t})^n prod u_i^{-1}) bounding P(u . Z <= t n) for Z with
// i.i.d. Exp(1) entries; 1 for t >= 1. Requires ||u||_1 = n; throws NotNormalized.
double chernoff_lower_tail(std::span<const double> u, double t);
double log_chernoff_lower_tail(std::span<const double> u, double t);

struct MeanEstimate {
    double mean = 0.0;
    double std_error = 0.0;
};

// Monte Carlo mean and standard error of the number of stable matchings.
// Throws TooLarge for n > 10, NonSquare for rectangular markets.
MeanEstimate expected_stable_count_mc(const CanonicalMarket& market, std::size_t n_trials,
                                      Seed seed);

// Fraction of resamples of the off-match values (X_ij ~ Exp(a_ij),
// Y_ji ~ Exp(b_ji), j != mu(i)) under which mu has no blocking pair, with
// the matched values pinned to (x, y).
double stability_frequency_mc(std::span<const double> x, std::span<const double> y,
                              const Matrix& A, const Matrix& B, const Matching& mu,
                              std::size_t trials, Seed seed);

// Empirical P(u . Z <= t n) for each t, sharing the draws of Z.
std::vector<double> chernoff_frequency_mc(std::span<const double> u,
                                          std::span<const double> t_values, std::size_t trials,
                                          Seed seed);

// Each experiment draws one Exp(rate_i) variable per rate and compares the
// ECDF with Exp(1). Returns the fraction of experiments with
// ||G_hat - F||_inf > 2 delta + epsilon.
double dkw_violation_frequency_mc(std::span<const double> rates, double delta, double epsilon,
                                  std::size_t experiments, Seed seed);

// Seed for trial t of a seeded Monte Carlo run.
inline Seed trial_seed(Seed master, std::uint64_t trial) {
    return stream_key(master, "trial", trial);
}

}  // namespace mml
