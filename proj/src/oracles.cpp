#include "mml/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mml/errors.hpp"
#include "mml/sampling.hpp"
#include "mml/stats.hpp"

namespace mml {
namespace {

// log(1 - s t) with s = 1 - e^{-p}, t = 1 - e^{-q}. Near s t = 1 use
// 1 - s t = e^{-p} + s e^{-q}, a sum of positive terms.
double log_pair_factor(double p, double q) {
    const double s = -std::expm1(-p);
    const double t = -std::expm1(-q);
    if (s * t < 0.5) return std::log1p(-s * t);
    const double a = -p, b = std::log(s) - q;
    const double hi = std::max(a, b);
    return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

void check_vectors(std::span<const double> x, std::span<const double> y, const Matching& mu) {
    if (x.size() != mu.n_men() || y.size() != mu.n_women())
        throw ShapeMismatch("value vectors do not match the matching");
}

}  // namespace

double log_p_mu(std::span<const double> x, std::span<const double> y, const Matrix& A,
                const Matrix& B, const Matching& mu) {
    check_vectors(x, y, mu);
    double acc = 0.0;
    for (std::size_t i = 0; i < mu.n_men(); ++i) {
        if (x[i] == 0.0) continue;
        for (std::size_t j = 0; j < mu.n_women(); ++j) {
            if (mu.wife(i) == static_cast<int>(j) || y[j] == 0.0) continue;
            acc += log_pair_factor(A(i, j) * x[i], B(j, i) * y[j]);
        }
    }
    return acc;
}

double p_mu(std::span<const double> x, std::span<const double> y, const Matrix& A,
            const Matrix& B, const Matching& mu) {
    return std::exp(log_p_mu(x, y, A, B, mu));
}

double log_q_xy(std::span<const double> x, std::span<const double> y, const Matrix& M) {
    if (x.size() != M.rows() || y.size() != M.cols()) throw ShapeMismatch("q: size mismatch");
    double bilinear = 0.0;
    for (std::size_t i = 0; i < M.rows(); ++i) {
        if (x[i] == 0.0) continue;
        const auto row = M.row(i);
        bilinear += x[i] * std::inner_product(row.begin(), row.end(), y.begin(), 0.0);
    }
    return -static_cast<double>(M.rows()) * bilinear;
}

double q_xy(std::span<const double> x, std::span<const double> y, const Matrix& M) {
    return std::exp(log_q_xy(x, y, M));
}

double naive_p_upper(std::span<const double> x, std::span<const double> y, const Matching& mu,
                     const Matrix& A, const Matrix& B, double C) {
    check_vectors(x, y, mu);
    const double c2 = C * C;
    std::vector<double> xh(x.size(), 0.0), yh(y.size(), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i)
        if (mu.wife(i) != kUnmatched) xh[i] = x[i] * A(i, static_cast<std::size_t>(mu.wife(i)));
    for (std::size_t j = 0; j < y.size(); ++j)
        if (mu.husband(j) != kUnmatched) yh[j] = y[j] * B(j, static_cast<std::size_t>(mu.husband(j)));
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (xh[i] == 0.0) continue;
        for (std::size_t j = 0; j < y.size(); ++j) {
            if (mu.wife(i) == static_cast<int>(j) || yh[j] == 0.0) continue;
            acc += log_pair_factor(xh[i] / c2, yh[j] / c2);
        }
    }
    return std::exp(acc);
}

double log_chernoff_lower_tail(std::span<const double> u, double t) {
    const double n = static_cast<double>(u.size());
    const double total = std::accumulate(u.begin(), u.end(), 0.0);
    if (std::abs(total - n) > 1e-9 * std::max(1.0, n))
        throw NotNormalized("chernoff bound needs ||u||_1 = n; got " + std::to_string(total));
    if (t < 0.0) throw Error("t must be nonnegative");
    double log_prod = 0.0;
    for (double ui : u) {
        if (!(ui > 0.0)) throw Error("weights must be positive");
        log_prod -= std::log(ui);
    }
    if (t >= 1.0) return 0.0;  // the bound only covers the lower tail
    if (t == 0.0) return -std::numeric_limits<double>::infinity();
    return std::min(0.0, n * (std::log(t) + 1.0 - t) + log_prod);
}

double chernoff_lower_tail(std::span<const double> u, double t) {
    return std::exp(log_chernoff_lower_tail(u, t));
}

MeanEstimate expected_stable_count_mc(const CanonicalMarket& market, std::size_t n_trials,
                                      Seed seed) {
    if (!market.square()) throw NonSquare("stable counting needs a square market");
    if (market.n_men() > kMaxEnumerationSize)
        throw TooLarge("expected_stable_count_mc", market.n_men(), kMaxEnumerationSize);
    if (n_trials == 0) throw Error("need at least one trial");
    const BalancedMarket bal = sinkhorn_balance(market);
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t t = 0; t < n_trials; ++t) {
        const LatentValues v = sample_latent(bal, trial_seed(seed, t));
        const auto count = static_cast<double>(enumerate_stable(prefs_from_latent(v)).size());
        sum += count;
        sum_sq += count * count;
    }
    const double n = static_cast<double>(n_trials);
    const double mean = sum / n;
    const double var = n > 1 ? std::max(0.0, (sum_sq - n * mean * mean) / (n - 1)) : 0.0;
    return {mean, std::sqrt(var / n)};
}

double stability_frequency_mc(std::span<const double> x, std::span<const double> y,
                              const Matrix& A, const Matrix& B, const Matching& mu,
                              std::size_t trials, Seed seed) {
    check_vectors(x, y, mu);
    std::size_t stable = 0;
    for (std::size_t t = 0; t < trials; ++t) {
        CounterRng rng(stream_key(seed, "stability", t));
        bool blocked = false;
        for (std::size_t i = 0; i < x.size() && !blocked; ++i)
            for (std::size_t j = 0; j < y.size(); ++j) {
                if (mu.wife(i) == static_cast<int>(j)) continue;
                const double xij = rng.exponential(A(i, j));
                const double yji = rng.exponential(B(j, i));
                if (xij < x[i] && yji < y[j]) {
                    blocked = true;
                    break;
                }
            }
        if (!blocked) ++stable;
    }
    return static_cast<double>(stable) / static_cast<double>(trials);
}

std::vector<double> chernoff_frequency_mc(std::span<const double> u,
                                          std::span<const double> t_values, std::size_t trials,
                                          Seed seed) {
    const double n = static_cast<double>(u.size());
    std::vector<std::size_t> hits(t_values.size(), 0);
    for (std::size_t t = 0; t < trials; ++t) {
        CounterRng rng(stream_key(seed, "chernoff", t));
        double s = 0.0;
        for (double ui : u) s += ui * rng.exponential(1.0);
        for (std::size_t k = 0; k < t_values.size(); ++k)
            if (s <= t_values[k] * n) ++hits[k];
    }
    std::vector<double> freq(t_values.size());
    for (std::size_t k = 0; k < freq.size(); ++k)
        freq[k] = static_cast<double>(hits[k]) / static_cast<double>(trials);
    return freq;
}

double dkw_violation_frequency_mc(std::span<const double> rates, double delta, double epsilon,
                                  std::size_t experiments, Seed seed) {
    std::vector<double> draws(rates.size());
    std::size_t violations = 0;
    for (std::size_t e = 0; e < experiments; ++e) {
        CounterRng rng(stream_key(seed, "dkw", e));
        for (std::size_t i = 0; i < rates.size(); ++i) draws[i] = rng.exponential(rates[i]);
        if (ks_distance_to_exp(draws, 1.0) > 2.0 * delta + epsilon) ++violations;
    }
    return static_cast<double>(violations) / static_cast<double>(experiments);
}

}  // namespace mml
