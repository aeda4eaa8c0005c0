#include "dsdgp/linalg.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <sstream>

#include "dsdgp/errors.hpp"

namespace dsdgp {

CholeskyResult cholesky_with_jitter(const Mat& a, double base_jitter) {
  if (a.rows() != a.cols())
    throw DimensionMismatch("cholesky_with_jitter: matrix is not square");
  if (!(base_jitter > 0.0))
    throw InvalidInput("cholesky_with_jitter: base_jitter must be positive");

  const double max_abs = a.cwiseAbs().maxCoeff();
  const double asym = (a - a.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-10 * std::max(max_abs, 1e-300))
    throw InvalidInput("cholesky_with_jitter: matrix is not symmetric");

  const double mean_diag = a.diagonal().mean();
  const double scale = mean_diag > 0.0 ? mean_diag : 1.0;

  Mat work(a.rows(), a.cols());
  for (int k = -1; k <= 8; ++k) {
    const double jitter = k < 0 ? 0.0 : base_jitter * std::pow(10.0, k) * scale;
    work = a;
    if (jitter > 0.0) work.diagonal().array() += jitter;
    Eigen::LLT<Mat> llt(work);
    if (llt.info() == Eigen::Success) {
      Mat l = llt.matrixL();
      if ((l.diagonal().array() > 0.0).all() && l.allFinite())
        return {LowerTriangular{std::move(l)}, jitter};
    }
  }

  std::ostringstream msg;
  msg << "cholesky_with_jitter: factorization failed for all jitter levels up to "
      << base_jitter * 1e8 * scale << " (dim " << a.rows() << ", mean diag " << mean_diag
      << ", min diag " << a.diagonal().minCoeff() << ", max diag " << a.diagonal().maxCoeff()
      << ")";
  throw JitterExhausted(msg.str());
}

Mat tri_solve(const LowerTriangular& l, const Mat& b, bool transposed) {
  if (l.dim() != b.rows())
    throw DimensionMismatch("tri_solve: factor dim does not match right-hand side rows");
  if (transposed)
    return l.m.transpose().triangularView<Eigen::Upper>().solve(b);
  return l.m.triangularView<Eigen::Lower>().solve(b);
}

}  // namespace dsdgp
