#pragma once

#include <iosfwd>
#include <string>

#include "mml/market.hpp"
#include "mml/matrix.hpp"

namespace mml {

// Plain-text market file:
//
//   n_men n_women
//   <a_hat, n_men rows of n_women entries>
//   <blank line>
//   <b_hat, n_women rows of n_men entries>
//
// Entries are written with 17 significant digits so that reading a written
// file reproduces every double bit-exactly.
void write_market(std::ostream& os, const CanonicalMarket& market);
std::string format_market(const CanonicalMarket& market);

// Rows that already sum to 1 (within 1e-12) are kept verbatim; otherwise the
// entries are treated as raw scores and normalized. Throws Error on malformed
// input, NonPositiveEntry on non-positive scores.
CanonicalMarket read_market(std::istream& is);
CanonicalMarket read_market_file(const std::string& path);
void write_market_file(const std::string& path, const CanonicalMarket& market);

// Two matrices in the same layout as a market file (used to dump latent
// values and balanced score matrices).
void write_matrix_pair(std::ostream& os, const Matrix& first, const Matrix& second);

std::string format_double(double v);

}  // namespace mml
