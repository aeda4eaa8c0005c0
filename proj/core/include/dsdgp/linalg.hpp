#pragma once

#include "dsdgp/types.hpp"

namespace dsdgp {

/// Lower-triangular factor. Entries above the diagonal are exact zeros;
/// when produced by a Cholesky factorization the diagonal is strictly
/// positive.
struct LowerTriangular {
  Mat m;
  Eigen::Index dim() const { return m.rows(); }
};

struct CholeskyResult {
  LowerTriangular l;
  double jitter;  // the amount actually added to the diagonal
};

/// Cholesky factorization with escalating diagonal jitter.
///
/// Tries jitter values {0, base*s, base*10*s, ..., base*1e8*s} where s is
/// the mean diagonal of `a`, and returns the factor for the first level at
/// which the factorization succeeds, together with that level. Throws
/// JitterExhausted when every level fails, with diagnostics of the matrix
/// in the message.
///
/// Pre: `a` square, symmetric to within 1e-10 relative asymmetry.
CholeskyResult cholesky_with_jitter(const Mat& a, double base_jitter);

/// Solve L x = b (or L^T x = b when `transposed`) for lower-triangular L.
Mat tri_solve(const LowerTriangular& l, const Mat& b, bool transposed);

}  // namespace dsdgp
