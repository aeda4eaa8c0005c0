#pragma once

#include <optional>

#include "dsdgp/tape.hpp"
#include "dsdgp/types.hpp"

namespace dsdgp {

/// Layer mean function: zero, or a fixed (never trained) linear map
/// m(X) = X W.
class MeanFunction {
 public:
  static MeanFunction zero(Eigen::Index d_out);
  static MeanFunction linear(Mat w);

  bool is_zero() const { return !w_.has_value(); }
  const Mat& w() const;
  Eigen::Index d_out() const { return d_out_; }

  Mat eval(const Mat& x) const;

  /// Graph node for m(x); nullopt for the zero mean so callers can elide
  /// the addition.
  std::optional<Expr> graph(Tape& t, Expr x) const;

 private:
  std::optional<Mat> w_;
  Eigen::Index d_out_ = 0;
};

/// Mean function for an inner layer: identity when widths match, otherwise
/// the PCA projection of the (already centered) training inputs — the
/// d_out leading right singular vectors sorted by singular value.
/// Throws DegenerateData when the inputs have fewer than d_out nonzero
/// singular values.
MeanFunction build_inner_mean(const Mat& x_train, Eigen::Index d_out);

}  // namespace dsdgp
