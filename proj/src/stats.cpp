#include "mml/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mml/errors.hpp"

namespace mml {

EmpiricalCDF::EmpiricalCDF(std::span<const double> samples)
    : sorted_(samples.begin(), samples.end()) {
    if (sorted_.empty()) throw EmptySample("empirical CDF of an empty sample");
    std::sort(sorted_.begin(), sorted_.end());
}

double EmpiricalCDF::operator()(double t) const {
    const auto it = std::upper_bound(sorted_.begin(), sorted_.end(), t);
    return static_cast<double>(it - sorted_.begin()) / static_cast<double>(sorted_.size());
}

double exp_cdf(double x, double rate) {
    return x <= 0.0 ? 0.0 : -std::expm1(-rate * x);
}

double ks_distance_sorted(std::span<const double> sorted, double rate) {
    if (sorted.empty()) throw EmptySample("KS distance of an empty sample");
    if (!(rate > 0.0)) throw NonPositiveRate("exponential rate must be positive");
    const double n = static_cast<double>(sorted.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        const double f = exp_cdf(sorted[i], rate);
        const double hi = static_cast<double>(i + 1) / n;
        const double lo = static_cast<double>(i) / n;
        d = std::max({d, std::abs(hi - f), std::abs(f - lo)});
    }
    return d;
}

double ks_distance_to_exp(std::span<const double> samples, double rate) {
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    return ks_distance_sorted(sorted, rate);
}

double exp_cdf_distance(double rate_a, double rate_b) {
    if (rate_a == rate_b) return 0.0;
    // |e^{-a x} - e^{-b x}| peaks at x = ln(a / b) / (a - b).
    const double x = std::log(rate_a / rate_b) / (rate_a - rate_b);
    return std::abs(std::exp(-rate_a * x) - std::exp(-rate_b * x));
}

ExponentialFit fit_at(std::span<const double> samples, double rate, FitMethod method) {
    return {rate, ks_distance_to_exp(samples, rate), method};
}

double l1_norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += std::abs(x);
    return s;
}

ExponentialFit inverse_mean_fit(std::span<const double> samples) {
    if (samples.empty()) throw DegenerateSample("empty sample");
    const double mean = l1_norm(samples) / static_cast<double>(samples.size());
    if (!(mean > 0.0)) throw DegenerateSample("all samples are zero");
    return fit_at(samples, 1.0 / mean, FitMethod::InverseMean);
}

ExponentialFit best_fit_exponential(std::span<const double> samples) {
    if (samples.empty()) throw DegenerateSample("empty sample");
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    if (sorted.front() < 0.0) throw DegenerateSample("negative sample");
    const double mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) /
                        static_cast<double>(sorted.size());
    if (!(mean > 0.0)) throw DegenerateSample("all samples are zero");

    // Search in log-rate, where the KS curve is well scaled.
    const double lo = std::log(0.01 / mean), hi = std::log(100.0 / mean);
    const double step = (hi - lo) / static_cast<double>(kFitGridPoints - 1);
    auto ks = [&](double log_rate) { return ks_distance_sorted(sorted, std::exp(log_rate)); };

    std::size_t best = 0;
    double best_ks = 2.0;
    for (std::size_t k = 0; k < kFitGridPoints; ++k) {
        const double d = ks(lo + step * static_cast<double>(k));
        if (d < best_ks) {
            best_ks = d;
            best = k;
        }
    }
    double best_log = lo + step * static_cast<double>(best);

    double a = lo + step * static_cast<double>(best == 0 ? 0 : best - 1);
    double b = lo + step * static_cast<double>(std::min(best + 1, kFitGridPoints - 1));
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
    double fc = ks(c), fd = ks(d);
    for (std::size_t it = 0; it < kFitRefineSteps; ++it) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = ks(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = ks(d);
        }
    }
    for (const auto& [x, f] : {std::pair{c, fc}, std::pair{d, fd}})
        if (f < best_ks) {
            best_ks = f;
            best_log = x;
        }
    return {std::exp(best_log), best_ks, FitMethod::GridRefine};
}

std::vector<double> rescaled_ranks(std::span<const int> ranks, std::span<const double> phi) {
    if (ranks.size() != phi.size()) throw ShapeMismatch("rank and fitness vectors differ in length");
    std::vector<double> out(ranks.size());
    for (std::size_t i = 0; i < ranks.size(); ++i) {
        if (!(phi[i] > 0.0)) throw Error("fitness must be positive");
        out[i] = static_cast<double>(ranks[i]) / phi[i];
    }
    return out;
}

double hyperbola_product(std::span<const double> x_delta, std::span<const double> y_delta,
                         std::size_t n) {
    return l1_norm(x_delta) * l1_norm(y_delta) / static_cast<double>(n);
}

Dispersion eig_dispersion(const Matrix& M, std::span<const double> y, double zeta) {
    const std::size_t n = M.rows();
    if (M.cols() != y.size()) throw ShapeMismatch("M and y differ in size");
    std::vector<double> e(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = M.row(i);
        e[i] = std::inner_product(row.begin(), row.end(), y.begin(), 0.0);
    }
    std::vector<double> sorted = e;
    std::sort(sorted.begin(), sorted.end());
    const double t = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    const double band = std::sqrt(zeta) * t;
    const auto bad = std::count_if(e.begin(), e.end(),
                                   [&](double v) { return std::abs(v - t) >= band; });
    return {t, static_cast<double>(bad) / static_cast<double>(n)};
}

RegionFlags region_check(std::span<const double> u, std::span<const double> v, const Matrix& M,
                         double c1_lo, double c1_hi, double c2) {
    const std::size_t n = u.size();
    if (v.size() != n || M.rows() != n || M.cols() != n)
        throw ShapeMismatch("region check: inconsistent sizes");
    const double ln_n = std::log(static_cast<double>(n));
    const double lower = c1_lo * ln_n;
    const double upper = c1_hi * static_cast<double>(n) * std::pow(ln_n, -7.0 / 8.0);
    auto in_r1 = [&](std::span<const double> w) {
        const double s = l1_norm(w);
        return s >= lower && s <= upper;
    };
    double bilinear = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (u[i] == 0.0) continue;
        const auto row = M.row(i);
        bilinear += u[i] * std::inner_product(row.begin(), row.end(), v.begin(), 0.0);
    }
    return {in_r1(u), in_r1(v), bilinear <= c2 * std::pow(ln_n, 1.0 / 8.0)};
}

double dkw_bound(std::size_t n, double /*delta*/, double epsilon) {
    return 4.0 * std::exp(-2.0 * static_cast<double>(n) * epsilon * epsilon / 9.0);
}

double rank_value_ratio_report(const MatchingOutcome& outcome, std::span<const double> phi,
                               double theta) {
    if (outcome.rank_men.size() != phi.size()) throw ShapeMismatch("fitness length mismatch");
    std::size_t total = 0, off = 0;
    for (std::size_t i = 0; i < phi.size(); ++i) {
        const double x = outcome.value_men[i];
        if (outcome.rank_men[i] == 0 || !(x > 0.0)) continue;
        ++total;
        if (std::abs(outcome.rank_men[i] / (x * phi[i]) - 1.0) > theta) ++off;
    }
    return total ? static_cast<double>(off) / static_cast<double>(total) : 0.0;
}

}  // namespace mml
