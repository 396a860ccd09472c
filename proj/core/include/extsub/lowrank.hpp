#pragma once

#include "extsub/matrix.hpp"

#include <vector>

namespace extsub {

struct TruncationResult {
    Matrix b_out; // d x r'
    Matrix a_out; // r' x k
    std::vector<double> singular_values; // full spectrum, descending
    double rel_frobenius_error = 0.0;
};

// Rank-r' SVD truncation with the singular values split as sqrt(S) into
// both factors. Sign convention: the largest-magnitude entry of each left
// singular vector (lowest index on ties) is made non-negative, so outputs
// are reproducible across runs and platforms.
TruncationResult svd_truncate(const Matrix & delta, std::size_t target_rank);

// Number of singular values >= tol_ratio * sigma_max; 0 for a zero matrix.
std::size_t effective_rank(const Matrix & delta, double tol_ratio);

} // namespace extsub
