#include "dsdgp/layer.hpp"

#include <cmath>

#include "dsdgp/errors.hpp"

namespace dsdgp {

GPLayer::GPLayer(Mat z, KernelVariant kernel, MeanFunction mean_fn, Eigen::Index d_out)
    : z_(std::move(z)), kernel_(std::move(kernel)), mean_fn_(std::move(mean_fn)), d_out_(d_out) {
  if (z_.cols() != kernel_input_dim(kernel_))
    throw DimensionMismatch("GPLayer: inducing input dim does not match the kernel");
  if (!mean_fn_.is_zero() && mean_fn_.w().rows() != z_.cols())
    throw DimensionMismatch("GPLayer: mean function input dim does not match the layer");
  if (mean_fn_.d_out() != d_out_)
    throw DimensionMismatch("GPLayer: mean function output dim does not match the layer");
  const Eigen::Index m = z_.rows();
  q_mu_ = Mat::Zero(m, d_out_);
  q_sqrt_unc_.assign(static_cast<std::size_t>(d_out_), Mat::Zero(m, m));  // log-diag 0 => identity
}

LowerTriangular GPLayer::q_sqrt(Eigen::Index d) const {
  const Mat& u = q_sqrt_unc_[static_cast<std::size_t>(d)];
  Mat l = u.triangularView<Eigen::StrictlyLower>();
  l.diagonal() = u.diagonal().array().exp();
  return LowerTriangular{std::move(l)};
}

void GPLayer::set_q_sqrt(Eigen::Index d, const LowerTriangular& l) {
  if (l.dim() != num_inducing()) throw DimensionMismatch("set_q_sqrt: factor dim != M");
  if ((l.m.diagonal().array() <= 0.0).any())
    throw InvalidInput("set_q_sqrt: factor diagonal must be strictly positive");
  Mat u = l.m.triangularView<Eigen::StrictlyLower>();
  u.diagonal() = l.m.diagonal().array().log();
  q_sqrt_unc_[static_cast<std::size_t>(d)] = std::move(u);
}

void GPLayer::collect_params(std::vector<ParamRef>& out, const std::string& prefix) {
  out.push_back({prefix + ".z", &z_});
  out.push_back({prefix + ".q_mu", &q_mu_});
  for (Eigen::Index d = 0; d < d_out_; ++d)
    out.push_back({prefix + ".q_sqrt" + std::to_string(d), &q_sqrt_unc_[static_cast<std::size_t>(d)]});
  RbfArdKernel& base = std::holds_alternative<RbfArdKernel>(kernel_)
                           ? std::get<RbfArdKernel>(kernel_)
                           : std::get<NoisyKernel>(kernel_).base;
  out.push_back({prefix + ".kernel.log_variance", &base.log_variance});
  out.push_back({prefix + ".kernel.log_lengthscales", &base.log_lengthscales});
  if (auto* noisy = std::get_if<NoisyKernel>(&kernel_))
    out.push_back({prefix + ".kernel.log_noise", &noisy->log_noise});
}

GPLayer::Ctx GPLayer::build_ctx(Tape& t, Binder& b) const {
  Ctx ctx;
  ctx.kernel = bind_kernel(t, b, kernel_);
  ctx.z = b(&z_);
  ctx.zs = scale_points(t, ctx.kernel, ctx.z);
  Expr kzz = gram_graph(t, ctx.kernel, ctx.zs, ctx.zs, /*same_set=*/true);
  ctx.chol = cholesky(kzz, kBaseJitter, &ctx.jitter);
  ctx.q_mu = b(&q_mu_);
  if (auto mz = mean_fn_.graph(t, ctx.z))
    ctx.mean_diff = sub(ctx.q_mu, *mz);
  else
    ctx.mean_diff = ctx.q_mu;
  ctx.q_l.reserve(static_cast<std::size_t>(d_out_));
  for (Eigen::Index d = 0; d < d_out_; ++d)
    ctx.q_l.push_back(lower_from_unconstrained(b(&q_sqrt_unc_[static_cast<std::size_t>(d)])));
  return ctx;
}

GPLayer::MarginalExprs GPLayer::marginal_graph(Tape& t, const Ctx& ctx, Expr x) const {
  if (x.cols() != d_in()) throw DimensionMismatch("marginal_graph: input dim != layer d_in");
  const Eigen::Index n = x.rows();

  ScaledPoints xs = scale_points(t, ctx.kernel, x);
  Expr kzx = gram_graph(t, ctx.kernel, ctx.zs, xs, /*same_set=*/false);  // M x n
  Expr a = tri_solve(ctx.chol, kzx, /*transposed=*/false);               // L^{-1} k(Z,x)
  Expr alpha = tri_solve(ctx.chol, a, /*transposed=*/true);              // k(Z,Z)^{-1} k(Z,x)

  Expr mean = matmul(alpha, ctx.mean_diff, /*trans_a=*/true);  // n x d_out
  if (auto mx = mean_fn_.graph(t, x)) mean = add(mean, *mx);

  // Prior conditional variance k(x,x) - ||L^{-1} k(Z,x)||^2 per column;
  // nonnegative up to rounding, clamped so the S-term keeps var > 0.
  Expr kdiag = gram_diag_row_graph(t, ctx.kernel, n, /*same_set=*/true);
  Expr prior_row = clamp_min(sub(kdiag, colsum(cw_square(a))), 0.0);

  std::vector<Expr> var_rows;
  var_rows.reserve(static_cast<std::size_t>(d_out_));
  for (Eigen::Index d = 0; d < d_out_; ++d) {
    Expr td = matmul(ctx.q_l[static_cast<std::size_t>(d)], alpha, /*trans_a=*/true);
    var_rows.push_back(add(prior_row, colsum(cw_square(td))));
  }
  Expr var = transpose(d_out_ == 1 ? var_rows[0] : vcat(var_rows));
  return {mean, var};
}

Expr GPLayer::kl_graph(Tape& t, const Ctx& ctx) const {
  const double m = static_cast<double>(num_inducing());
  const double d_out = static_cast<double>(d_out_);

  // Shared k(Z,Z) terms.
  Expr logdet_k = scale(sum(cw_log(take_diag(ctx.chol))), 2.0);
  Expr mahal = sum(cw_square(tri_solve(ctx.chol, ctx.mean_diff, /*transposed=*/false)));

  Expr acc = add(mahal, scale(logdet_k, d_out));
  for (Eigen::Index d = 0; d < d_out_; ++d) {
    const Expr& l = ctx.q_l[static_cast<std::size_t>(d)];
    Expr trace_term = sum(cw_square(tri_solve(ctx.chol, l, /*transposed=*/false)));
    // log det S_d = 2 sum of the unconstrained log-diagonal; recovered from
    // the constrained factor to keep this graph independent of the storage.
    Expr logdet_s = scale(sum(cw_log(take_diag(l))), 2.0);
    acc = add(acc, sub(trace_term, logdet_s));
  }
  acc = add(acc, t.constant(Mat::Constant(1, 1, -m * d_out)));
  return scale(acc, 0.5);
}

namespace {

std::vector<ParamRef> no_params;

}  // namespace

MarginalGaussians GPLayer::marginal_posterior(const Mat& x) const {
  Tape t;
  Binder b(t, no_params, /*track_gradients=*/false);
  Ctx ctx = build_ctx(t, b);
  MarginalExprs m = marginal_graph(t, ctx, t.constant(x));
  MarginalGaussians out{m.mean.value(), m.var.value()};
  if (!all_finite(out.mean) || !all_finite(out.variance))
    throw Error("marginal_posterior: non-finite output");
  return out;
}

Mat GPLayer::sample_through(const Mat& x_hat, const Mat& eps) const {
  if (eps.rows() != x_hat.rows() || eps.cols() != d_out_)
    throw DimensionMismatch("sample_through: eps must be n x d_out");
  Tape t;
  Binder b(t, no_params, /*track_gradients=*/false);
  Ctx ctx = build_ctx(t, b);
  MarginalExprs m = marginal_graph(t, ctx, t.constant(x_hat));
  Expr sample = add(m.mean, hadamard(t.constant(eps), cw_sqrt(m.var)));
  return sample.value();
}

double GPLayer::kl_to_prior() const {
  Tape t;
  Binder b(t, no_params, /*track_gradients=*/false);
  Ctx ctx = build_ctx(t, b);
  return kl_graph(t, ctx).value()(0, 0);
}

}  // namespace dsdgp
