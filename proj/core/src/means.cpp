#include "dsdgp/means.hpp"

#include <Eigen/SVD>

#include "dsdgp/errors.hpp"

namespace dsdgp {

MeanFunction MeanFunction::zero(Eigen::Index d_out) {
  MeanFunction m;
  m.d_out_ = d_out;
  return m;
}

MeanFunction MeanFunction::linear(Mat w) {
  MeanFunction m;
  m.d_out_ = w.cols();
  m.w_ = std::move(w);
  return m;
}

const Mat& MeanFunction::w() const {
  if (!w_) throw InvalidInput("MeanFunction: zero mean has no weight matrix");
  return *w_;
}

Mat MeanFunction::eval(const Mat& x) const {
  if (!w_) return Mat::Zero(x.rows(), d_out_);
  if (x.cols() != w_->rows()) throw DimensionMismatch("MeanFunction: input dim != rows(W)");
  return x * (*w_);
}

std::optional<Expr> MeanFunction::graph(Tape& t, Expr x) const {
  if (!w_) return std::nullopt;
  if (x.cols() != w_->rows()) throw DimensionMismatch("MeanFunction: input dim != rows(W)");
  return matmul(x, t.constant(*w_));
}

MeanFunction build_inner_mean(const Mat& x_train, Eigen::Index d_out) {
  const Eigen::Index d_in = x_train.cols();
  if (d_out > d_in) throw InvalidInput("build_inner_mean: d_out must not exceed the input dim");
  if (d_out == d_in) return MeanFunction::linear(Mat::Identity(d_in, d_in));

  Eigen::BDCSVD<Mat> svd(x_train, Eigen::ComputeThinV);
  const Vec& sv = svd.singularValues();
  const double tol = std::max(x_train.rows(), x_train.cols()) *
                     Eigen::NumTraits<double>::epsilon() * (sv.size() > 0 ? sv[0] : 0.0);
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv[i] > tol) ++rank;
  if (rank < d_out)
    throw DegenerateData("build_inner_mean: inputs have fewer than d_out nonzero singular values");
  return MeanFunction::linear(svd.matrixV().leftCols(d_out));
}

}  // namespace dsdgp
