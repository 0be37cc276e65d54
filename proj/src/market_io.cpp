#include "mml/market_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "mml/errors.hpp"

namespace mml {
namespace {

void write_rows(std::ostream& os, const Matrix& m) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            if (j) os << ' ';
            os << format_double(m(i, j));
        }
        os << '\n';
    }
}

Matrix read_rows(std::istream& is, std::size_t rows, std::size_t cols, const char* name) {
    Matrix m(rows, cols);
    std::string token;
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) {
            if (!(is >> token))
                throw Error(std::string("market file: truncated ") + name + " at entry (" +
                            std::to_string(i) + "," + std::to_string(j) + ")");
            double v = 0.0;
            const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
            if (ec != std::errc() || ptr != token.data() + token.size())
                throw Error("market file: bad number '" + token + "'");
            m(i, j) = v;
        }
    return m;
}

bool rows_stochastic(const Matrix& m) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const auto row = m.row(i);
        if (std::abs(std::accumulate(row.begin(), row.end(), 0.0) - 1.0) > kRowSumTolerance)
            return false;
    }
    return true;
}

}  // namespace

std::string format_double(double v) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    return std::string(buf, ptr);
}

void write_matrix_pair(std::ostream& os, const Matrix& first, const Matrix& second) {
    os << first.rows() << ' ' << first.cols() << '\n';
    write_rows(os, first);
    os << '\n';
    write_rows(os, second);
}

void write_market(std::ostream& os, const CanonicalMarket& market) {
    write_matrix_pair(os, market.a_hat(), market.b_hat());
}

std::string format_market(const CanonicalMarket& market) {
    std::ostringstream os;
    write_market(os, market);
    return os.str();
}

CanonicalMarket read_market(std::istream& is) {
    long long n_men = 0, n_women = 0;
    if (!(is >> n_men >> n_women) || n_men <= 0 || n_women <= 0)
        throw Error("market file: header must be 'n_men n_women' with positive counts");
    Matrix a = read_rows(is, static_cast<std::size_t>(n_men), static_cast<std::size_t>(n_women),
                         "a_hat");
    Matrix b = read_rows(is, static_cast<std::size_t>(n_women), static_cast<std::size_t>(n_men),
                         "b_hat");
    std::string extra;
    if (is >> extra) throw Error("market file: unexpected trailing token '" + extra + "'");
    if (rows_stochastic(a) && rows_stochastic(b)) return CanonicalMarket(std::move(a), std::move(b));
    return canonical_from_raw(a, b);
}

CanonicalMarket read_market_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open market file '" + path + "'");
    return read_market(in);
}

void write_market_file(const std::string& path, const CanonicalMarket& market) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write market file '" + path + "'");
    write_market(out, market);
}

}  // namespace mml
