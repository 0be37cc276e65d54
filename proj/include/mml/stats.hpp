#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mml/matching.hpp"
#include "mml/matrix.hpp"

namespace mml {

// Right-continuous empirical distribution function.
class EmpiricalCDF {
public:
    explicit EmpiricalCDF(std::span<const double> samples);

    double operator()(double t) const;
    std::size_t size() const noexcept { return sorted_.size(); }
    const std::vector<double>& sorted_samples() const noexcept { return sorted_; }

private:
    std::vector<double> sorted_;
};

// CDF of Exp(rate).
double exp_cdf(double x, double rate);

// Exact sup-norm distance between the ECDF of `samples` and Exp(rate), taken
// at the jump points. Throws EmptySample, NonPositiveRate.
double ks_distance_to_exp(std::span<const double> samples, double rate);

// Same, for samples already sorted ascending.
double ks_distance_sorted(std::span<const double> sorted, double rate);

// sup_x |F_a(x) - F_b(x)| between two exponential CDFs.
double exp_cdf_distance(double rate_a, double rate_b);

enum class FitMethod { GridRefine, ClosedFormYSum, InverseMean };

struct ExponentialFit {
    double lambda = 0.0;
    double ks_distance = 1.0;
    FitMethod method = FitMethod::GridRefine;
};

inline constexpr std::size_t kFitGridPoints = 64;
inline constexpr std::size_t kFitRefineSteps = 40;

// Minimizes the KS distance over rates: 64-point log grid on
// [0.01 / mean, 100 / mean], then golden-section refinement on the bracket
// around the best grid point. Throws DegenerateSample for empty or all-zero
// input.
ExponentialFit best_fit_exponential(std::span<const double> samples);

// KS distance at a caller-chosen rate, tagged with how the rate was obtained.
ExponentialFit fit_at(std::span<const double> samples, double rate, FitMethod method);

// Rate 1 / mean.
ExponentialFit inverse_mean_fit(std::span<const double> samples);

double l1_norm(std::span<const double> v);

// R_i / phi_i. Throws ShapeMismatch.
std::vector<double> rescaled_ranks(std::span<const int> ranks, std::span<const double> phi);

// n^-1 ||x||_1 ||y||_1.
double hyperbola_product(std::span<const double> x_delta, std::span<const double> y_delta,
                         std::size_t n);

struct Dispersion {
    double t_star = 0.0;
    double violating_fraction = 0.0;
};

// e = M y, t* = median(e); fraction of i with |e_i - t*| >= sqrt(zeta) t*.
Dispersion eig_dispersion(const Matrix& M, std::span<const double> y, double zeta);

struct RegionFlags {
    bool in_R1_u = false;
    bool in_R1_v = false;
    bool in_R2 = false;
};

// c1_lo ln n <= ||u||_1 <= c1_hi n (ln n)^(-7/8) (same for v) and
// u^T M v <= c2 (ln n)^(1/8). Boundaries are inclusive.
RegionFlags region_check(std::span<const double> u, std::span<const double> v, const Matrix& M,
                         double c1_lo, double c1_hi, double c2);

// 4 exp(-2 n eps^2 / 9): bound on P(||G_hat - F|| > 2 delta + eps) for n
// independent draws whose CDFs are all within delta of F.
double dkw_bound(std::size_t n, double delta, double epsilon);

// Fraction of matched men with |R_i / (x_i phi_i) - 1| > theta.
double rank_value_ratio_report(const MatchingOutcome& outcome, std::span<const double> phi,
                               double theta);

}  // namespace mml
