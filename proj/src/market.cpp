#include "mml/market.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>

#include "mml/errors.hpp"

namespace mml {
namespace {

double row_sum(std::span<const double> row) {
    return std::accumulate(row.begin(), row.end(), 0.0);
}

void require_positive(const Matrix& m, const char* name) {
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) {
            const double v = m(i, j);
            if (!(v > 0.0) || !std::isfinite(v)) {
                std::ostringstream os;
                os << name << "(" << i << "," << j << ") = " << v
                   << " is not a finite positive score";
                throw NonPositiveEntry(os.str());
            }
        }
}

void require_transposed_shapes(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.cols() || a.cols() != b.rows() || a.rows() == 0 || a.cols() == 0) {
        std::ostringstream os;
        os << "score matrices must be (m x w) and (w x m); got (" << a.rows() << " x "
           << a.cols() << ") and (" << b.rows() << " x " << b.cols() << ")";
        throw ShapeMismatch(os.str());
    }
}

Matrix normalize_rows(const Matrix& raw) {
    Matrix out(raw.rows(), raw.cols());
    for (std::size_t i = 0; i < raw.rows(); ++i) {
        const double s = row_sum(raw.row(i));
        for (std::size_t j = 0; j < raw.cols(); ++j) out(i, j) = raw(i, j) / s;
    }
    return out;
}

double max_abs_row_deviation(const Matrix& m) {
    double dev = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i)
        dev = std::max(dev, std::abs(row_sum(m.row(i)) - 1.0));
    return dev;
}

double max_abs_col_deviation(const Matrix& m) {
    std::vector<double> cols(m.cols(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) cols[j] += m(i, j);
    double dev = 0.0;
    for (double c : cols) dev = std::max(dev, std::abs(c - 1.0));
    return dev;
}

}  // namespace

CanonicalMarket::CanonicalMarket(Matrix a_hat, Matrix b_hat)
    : a_hat_(std::move(a_hat)), b_hat_(std::move(b_hat)) {
    require_transposed_shapes(a_hat_, b_hat_);
    require_positive(a_hat_, "a_hat");
    require_positive(b_hat_, "b_hat");
    const double dev = std::max(max_abs_row_deviation(a_hat_), max_abs_row_deviation(b_hat_));
    if (dev > kRowSumTolerance)
        throw NotNormalized("canonical score rows must sum to 1 (max deviation " +
                            std::to_string(dev) + ")");
}

CanonicalMarket canonical_from_raw(const Matrix& a_raw, const Matrix& b_raw) {
    require_transposed_shapes(a_raw, b_raw);
    require_positive(a_raw, "a_raw");
    require_positive(b_raw, "b_raw");
    return CanonicalMarket(normalize_rows(a_raw), normalize_rows(b_raw));
}

BalancedMarket sinkhorn_balance(const CanonicalMarket& market, SinkhornOptions opts) {
    if (!market.square())
        throw NonSquare("balanced form needs a square market; got " +
                        std::to_string(market.n_men()) + " men and " +
                        std::to_string(market.n_women()) + " women");
    if (!(opts.tol > 0.0)) throw Error("sinkhorn tolerance must be positive");

    const std::size_t n = market.n_men();
    const Matrix& ah = market.a_hat();
    const Matrix& bh = market.b_hat();

    // K = a_hat o b_hat^T; find r, c with diag(r) K diag(c) bistochastic.
    Matrix K(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) K(i, j) = ah(i, j) * bh(j, i);

    std::vector<double> r(n, 1.0), c(n, 1.0), rowsum(n), colsum(n);
    std::size_t iter = 0;
    while (true) {
        // After a column step every column sum is exactly 1, so the row
        // deviation alone measures the residual.
        double residual = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += K(i, j) * c[j];
            rowsum[i] = s;
            residual = std::max(residual, std::abs(r[i] * s - 1.0));
        }
        if (iter > 0 && residual <= opts.tol) break;
        if (iter == opts.max_iters) throw NoConvergence(iter, residual);
        ++iter;

        for (std::size_t i = 0; i < n; ++i) r[i] = 1.0 / rowsum[i];
        std::fill(colsum.begin(), colsum.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) colsum[j] += r[i] * K(i, j);
        for (std::size_t j = 0; j < n; ++j) c[j] = 1.0 / colsum[j];
    }

    // phi_i psi_j = n r_i c_j; split the constant symmetrically.
    double inv_r = 0.0, inv_c = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        inv_r += 1.0 / r[i];
        inv_c += 1.0 / c[i];
    }
    const double t = std::sqrt(inv_r / inv_c);
    const double root_n = std::sqrt(static_cast<double>(n));

    BalancedMarket bal;
    bal.phi.resize(n);
    bal.psi.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        bal.phi[i] = root_n * r[i] * t;
        bal.psi[i] = root_n * c[i] / t;
    }
    bal.A = Matrix(n, n);
    bal.B = Matrix(n, n);
    bal.M = Matrix(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            bal.A(i, j) = bal.phi[i] * ah(i, j);
            bal.B(i, j) = bal.psi[i] * bh(i, j);
        }
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) bal.M(i, j) = inv_n * bal.A(i, j) * bal.B(j, i);

    bal.sinkhorn_iters = iter;
    bal.residual = std::max(max_abs_row_deviation(bal.M), max_abs_col_deviation(bal.M));
    bal.c_bound = contiguity_constant(bal.A, bal.B, bal.M);
    return bal;
}

double contiguity_constant(const Matrix& A, const Matrix& B, const Matrix& M) {
    const double n = static_cast<double>(M.rows());
    double c = 1.0;
    auto visit = [&c](double v) { c = std::max(c, std::max(v, 1.0 / v)); };
    for (std::size_t i = 0; i < A.rows(); ++i)
        for (std::size_t j = 0; j < A.cols(); ++j) {
            visit(A(i, j));
            visit(B(j, i));
            visit(n * M(i, j));
        }
    return c;
}

double contiguity_constant(const BalancedMarket& bal) {
    return contiguity_constant(bal.A, bal.B, bal.M);
}

CanonicalMarket random_cbounded_market(std::size_t n_men, std::size_t n_women, double c_target,
                                       Seed seed) {
    if (!(c_target >= 1.0)) throw Error("c_target must be >= 1");
    const double log_c = std::log(c_target);
    auto draw = [&](std::string_view label, std::size_t rows, std::size_t cols) {
        Matrix raw(rows, cols);
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) {
                const double u = uniform_at(stream_key(seed, label, i, j));
                raw(i, j) = std::exp(log_c * (2.0 * u - 1.0));
            }
        return raw;
    };
    return canonical_from_raw(draw("market.a", n_men, n_women),
                              draw("market.b", n_women, n_men));
}

CanonicalMarket random_cbounded_market(std::size_t n, double c_target, Seed seed) {
    return random_cbounded_market(n, n, c_target, seed);
}

CanonicalMarket uniform_market(std::size_t n_men, std::size_t n_women) {
    return CanonicalMarket(Matrix(n_men, n_women, 1.0 / static_cast<double>(n_women)),
                           Matrix(n_women, n_men, 1.0 / static_cast<double>(n_men)));
}

CanonicalMarket public_scores_market(const std::vector<double>& a_scores,
                                     const std::vector<double>& b_scores) {
    const std::size_t n_women = a_scores.size();
    const std::size_t n_men = b_scores.size();
    Matrix a_raw(n_men, n_women), b_raw(n_women, n_men);
    for (std::size_t i = 0; i < n_men; ++i)
        for (std::size_t j = 0; j < n_women; ++j) {
            a_raw(i, j) = a_scores[j];
            b_raw(j, i) = b_scores[i];
        }
    return canonical_from_raw(a_raw, b_raw);
}

CanonicalMarket backfill_imbalanced(const CanonicalMarket& market, std::size_t k) {
    if (k == 0) return market;
    const std::size_t n = market.n_women();
    if (market.n_men() + k != n)
        throw ShapeMismatch("backfill needs n - k men and n women; got " +
                            std::to_string(market.n_men()) + " men, " + std::to_string(n) +
                            " women, k = " + std::to_string(k));
    const std::size_t real = market.n_men();
    // Rows are scale-free, so the existing canonical rows act as raw scores.
    // Women's rows get unit raw scores for the new men, relative to each
    // woman's mean score over the real men.
    Matrix a_raw(n, n), b_raw(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            a_raw(i, j) = i < real ? market.a_hat()(i, j) * static_cast<double>(n) : 1.0;
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < n; ++i)
            b_raw(j, i) = i < real ? market.b_hat()(j, i) * static_cast<double>(real) : 1.0;
    return canonical_from_raw(a_raw, b_raw);
}

}  // namespace mml
