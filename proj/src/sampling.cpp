#include "mml/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "mml/errors.hpp"

namespace mml {
namespace {

Matrix sample_exponential(const Matrix& rates, Seed seed, std::string_view label) {
    Matrix out(rates.rows(), rates.cols());
    const std::uint64_t family = stream_key(seed, label);
    for (std::size_t i = 0; i < rates.rows(); ++i) {
        const std::uint64_t row_key = derive_key(family, i);
        for (std::size_t j = 0; j < rates.cols(); ++j) {
            const double u = uniform_at(derive_key(row_key, j));
            out(i, j) = -std::log(u) / rates(i, j);
        }
    }
    return out;
}

std::vector<int> sequential_logit(std::span<const double> scores, CounterRng& rng) {
    const std::size_t n = scores.size();
    std::vector<double> remaining(scores.begin(), scores.end());
    std::vector<int> order;
    order.reserve(n);
    for (std::size_t step = 0; step < n; ++step) {
        const double total = std::accumulate(remaining.begin(), remaining.end(), 0.0);
        const double target = rng.uniform() * total;
        double acc = 0.0;
        std::size_t pick = n;
        for (std::size_t j = 0; j < n; ++j) {
            if (remaining[j] <= 0.0) continue;
            acc += remaining[j];
            pick = j;
            if (target < acc) break;
        }
        order.push_back(static_cast<int>(pick));
        remaining[pick] = 0.0;
    }
    return order;
}

}  // namespace

LatentValues LatentValues::first_men(std::size_t count) const {
    LatentValues out;
    out.seed = seed;
    out.X = Matrix(count, n_women());
    out.Y = Matrix(n_women(), count);
    for (std::size_t i = 0; i < count; ++i)
        for (std::size_t j = 0; j < n_women(); ++j) {
            out.X(i, j) = X(i, j);
            out.Y(j, i) = Y(j, i);
        }
    return out;
}

std::vector<int> ascending_order(std::span<const double> row) {
    std::vector<int> idx(row.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return row[a] < row[b]; });
    for (std::size_t k = 1; k < idx.size(); ++k)
        if (row[idx[k]] == row[idx[k - 1]])
            throw DuplicateValue("tied latent values " + std::to_string(row[idx[k]]) +
                                 " at positions " + std::to_string(idx[k - 1]) + " and " +
                                 std::to_string(idx[k]));
    return idx;
}

LatentValues sample_latent(const Matrix& x_rates, const Matrix& y_rates, Seed seed) {
    if (x_rates.rows() != y_rates.cols() || x_rates.cols() != y_rates.rows())
        throw ShapeMismatch("rate matrices must be (m x w) and (w x m)");
    LatentValues v;
    v.seed = seed;
    v.X = sample_exponential(x_rates, seed, "X");
    v.Y = sample_exponential(y_rates, seed, "Y");
    // Probability-zero ties would make preferences ill-defined.
    for (const Matrix* m : {&v.X, &v.Y})
        for (std::size_t i = 0; i < m->rows(); ++i) {
            std::vector<double> row(m->row(i).begin(), m->row(i).end());
            std::sort(row.begin(), row.end());
            if (std::adjacent_find(row.begin(), row.end()) != row.end())
                throw DuplicateValue("tied latent values in row " + std::to_string(i) +
                                     "; reseed");
        }
    return v;
}

LatentValues sample_latent(const BalancedMarket& bal, Seed seed) {
    return sample_latent(bal.A, bal.B, seed);
}

PreferenceProfile prefs_from_latent(const LatentValues& values) {
    PreferenceProfile p;
    p.men.reserve(values.n_men());
    for (std::size_t i = 0; i < values.n_men(); ++i) p.men.push_back(ascending_order(values.X.row(i)));
    p.women.reserve(values.n_women());
    for (std::size_t j = 0; j < values.n_women(); ++j)
        p.women.push_back(ascending_order(values.Y.row(j)));
    return p;
}

PreferenceProfile logit_sample_prefs(const BalancedMarket& bal, Seed seed) {
    PreferenceProfile p;
    const std::size_t n = bal.n();
    for (std::size_t i = 0; i < n; ++i) {
        CounterRng rng(stream_key(seed, "logit.men", i));
        p.men.push_back(sequential_logit(bal.A.row(i), rng));
    }
    for (std::size_t j = 0; j < n; ++j) {
        CounterRng rng(stream_key(seed, "logit.women", j));
        p.women.push_back(sequential_logit(bal.B.row(j), rng));
    }
    return p;
}

}  // namespace mml
