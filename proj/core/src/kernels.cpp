#include "dsdgp/kernels.hpp"

#include <cmath>

#include "dsdgp/errors.hpp"

namespace dsdgp {

RbfArdKernel RbfArdKernel::create(double variance, const Vec& lengthscales) {
  if (!(variance > 0.0)) throw InvalidInput("RbfArdKernel: variance must be positive");
  if ((lengthscales.array() <= 0.0).any())
    throw InvalidInput("RbfArdKernel: lengthscales must be positive");
  RbfArdKernel k;
  k.log_variance = Mat::Constant(1, 1, std::log(variance));
  k.log_lengthscales = lengthscales.array().log().transpose();
  return k;
}

RbfArdKernel RbfArdKernel::create(double variance, double lengthscale, Eigen::Index d) {
  return create(variance, Vec::Constant(d, lengthscale));
}

NoisyKernel NoisyKernel::create(RbfArdKernel base, double noise_variance) {
  if (!(noise_variance > 0.0)) throw InvalidInput("NoisyKernel: noise variance must be positive");
  NoisyKernel k;
  k.base = std::move(base);
  k.log_noise = Mat::Constant(1, 1, std::log(noise_variance));
  return k;
}

Eigen::Index kernel_input_dim(const KernelVariant& k) {
  return std::visit([](const auto& kk) { return kk.input_dim(); }, k);
}

const RbfArdKernel& kernel_base(const KernelVariant& k) {
  if (const auto* plain = std::get_if<RbfArdKernel>(&k)) return *plain;
  return std::get<NoisyKernel>(k).base;
}

bool kernel_is_noisy(const KernelVariant& k) { return std::holds_alternative<NoisyKernel>(k); }

KernelExprs bind_kernel(Tape& t, Binder& b, const KernelVariant& kernel) {
  const RbfArdKernel& base = kernel_base(kernel);
  KernelExprs k;
  k.variance = cw_exp(b(&base.log_variance));
  k.inv_lengthscales = cw_exp(neg(b(&base.log_lengthscales)));
  if (const auto* noisy = std::get_if<NoisyKernel>(&kernel))
    k.noise = cw_exp(b(&noisy->log_noise));
  return k;
}

ScaledPoints scale_points(Tape& t, const KernelExprs& k, Expr points) {
  if (points.cols() != k.inv_lengthscales.cols())
    throw DimensionMismatch("scale_points: point dimension does not match lengthscales");
  ScaledPoints s;
  s.scaled = mul_rowvec(points, k.inv_lengthscales);
  s.sqnorms = rowsum(cw_square(s.scaled));
  return s;
}

Expr gram_graph(Tape& t, const KernelExprs& k, const ScaledPoints& a, const ScaledPoints& b,
                bool same_set) {
  if (same_set && a.scaled.rows() != b.scaled.rows())
    throw DimensionMismatch("gram_graph: same_set requires identical point sets");
  // Scaled squared distances via the expanded form, clamped at zero.
  Expr cross = matmul(a.scaled, b.scaled, false, true);
  Expr sq = add_colvec(add_rowvec(scale(cross, -2.0), transpose(b.sqnorms)), a.sqnorms);
  Expr g = scale_by(cw_exp(scale(clamp_min(sq, 0.0), -0.5)), k.variance);
  if (same_set && k.noise) g = add_scaled_identity(g, *k.noise);
  return g;
}

Expr gram_diag_row_graph(Tape& t, const KernelExprs& k, Eigen::Index n, bool same_set) {
  // k(x, x) for the RBF kernel is the signal variance, plus noise on
  // same-set diagonals.
  Expr row = scale_by(t.constant(Mat::Ones(1, n)), k.variance);
  if (same_set && k.noise) row = add(row, scale_by(t.constant(Mat::Ones(1, n)), *k.noise));
  return row;
}

Mat gram(const KernelVariant& kernel, const Mat& a, const Mat& b, bool same_set) {
  if (a.cols() != b.cols() || a.cols() != kernel_input_dim(kernel))
    throw DimensionMismatch("gram: point dimensions do not match the kernel");
  if (same_set && a.rows() != b.rows())
    throw DimensionMismatch("gram: same_set requires identical point sets");
  const RbfArdKernel& base = kernel_base(kernel);
  Tape t;
  std::vector<ParamRef> params;  // value-only evaluation
  Binder bind(t, params, false);
  KernelExprs k;
  k.variance = cw_exp(t.constant(base.log_variance));
  k.inv_lengthscales = cw_exp(neg(t.constant(base.log_lengthscales)));
  if (const auto* noisy = std::get_if<NoisyKernel>(&kernel))
    k.noise = cw_exp(t.constant(noisy->log_noise));
  ScaledPoints sa = scale_points(t, k, t.constant(a));
  ScaledPoints sb = scale_points(t, k, t.constant(b));
  return gram_graph(t, k, sa, sb, same_set).value();
}

Vec gram_diag(const KernelVariant& kernel, const Mat& a, bool same_set) {
  if (a.cols() != kernel_input_dim(kernel))
    throw DimensionMismatch("gram_diag: point dimension does not match the kernel");
  double v = kernel_base(kernel).variance();
  if (same_set && kernel_is_noisy(kernel)) v += std::get<NoisyKernel>(kernel).noise_variance();
  return Vec::Constant(a.rows(), v);
}

}  // namespace dsdgp
